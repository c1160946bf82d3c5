#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "pyrgs/core.hpp"

namespace pyrgs {

// Frequency class drives the codec's shape policy: high-frequency channels
// are modeled as Laplace (beta = 1), smooth ones as Gaussian (beta = 2).
enum class FreqClass : std::uint8_t { kSmooth = 0, kHighFreq = 1 };

inline const char* freq_class_name(FreqClass f) {
  return f == FreqClass::kHighFreq ? "HIGH_FREQ" : "SMOOTH";
}

inline FreqClass freq_class_from_name(const std::string& s) {
  if (s == "HIGH_FREQ") return FreqClass::kHighFreq;
  if (s == "SMOOTH") return FreqClass::kSmooth;
  throw Error(Errc::invalid_config, "unknown frequency class '" + s + "' (expected HIGH_FREQ or SMOOTH)");
}

struct AttributeChannel {
  std::string name;
  FreqClass freq = FreqClass::kSmooth;
  std::vector<float> values;
};

struct GaussianCloud {
  std::vector<Vec3f> positions;
  std::vector<AttributeChannel> channels;

  std::size_t size() const { return positions.size(); }
};

inline void validate_cloud(const GaussianCloud& cloud) {
  const std::size_t n = cloud.positions.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3f& p = cloud.positions[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw Error(Errc::non_finite_value, "non-finite position at vertex " + std::to_string(i));
  }
  std::unordered_set<std::string> names;
  for (const auto& ch : cloud.channels) {
    if (ch.values.size() != n)
      throw Error(Errc::invalid_cloud,
                  "channel '" + ch.name + "' has " + std::to_string(ch.values.size()) +
                      " values, expected " + std::to_string(n));
    if (!names.insert(ch.name).second)
      throw Error(Errc::invalid_cloud, "duplicate channel name '" + ch.name + "'");
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(ch.values[i]))
        throw Error(Errc::non_finite_value,
                    "non-finite value in channel '" + ch.name + "' at vertex " + std::to_string(i));
  }
}

inline GaussianCloud subset(const GaussianCloud& cloud, std::span<const std::uint32_t> indices) {
  GaussianCloud out;
  out.positions.reserve(indices.size());
  for (std::uint32_t i : indices) {
    if (i >= cloud.size()) throw Error(Errc::out_of_range, "subset index " + std::to_string(i) + " out of range");
    out.positions.push_back(cloud.positions[i]);
  }
  out.channels.reserve(cloud.channels.size());
  for (const auto& ch : cloud.channels) {
    AttributeChannel c;
    c.name = ch.name;
    c.freq = ch.freq;
    c.values.reserve(indices.size());
    for (std::uint32_t i : indices) c.values.push_back(ch.values[i]);
    out.channels.push_back(std::move(c));
  }
  return out;
}

struct Bbox {
  Vec3d min;
  Vec3d max;
};

// Componentwise bounds over positions. Empty cloud yields a degenerate box at
// the origin; callers that need a scale fall back explicitly.
inline Bbox bbox(const GaussianCloud& cloud) {
  if (cloud.positions.empty()) return {};
  Vec3d lo = to_double(cloud.positions[0]);
  Vec3d hi = lo;
  for (const Vec3f& pf : cloud.positions) {
    Vec3d p = to_double(pf);
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
    hi.z = std::max(hi.z, p.z);
  }
  return {lo, hi};
}

inline double bbox_diagonal(const GaussianCloud& cloud) {
  Bbox b = bbox(cloud);
  return norm(b.max - b.min);
}

inline bool bit_equal(const Vec3f& a, const Vec3f& b) {
  return std::bit_cast<std::uint32_t>(a.x) == std::bit_cast<std::uint32_t>(b.x) &&
         std::bit_cast<std::uint32_t>(a.y) == std::bit_cast<std::uint32_t>(b.y) &&
         std::bit_cast<std::uint32_t>(a.z) == std::bit_cast<std::uint32_t>(b.z);
}

inline bool bit_equal(const GaussianCloud& a, const GaussianCloud& b) {
  if (a.size() != b.size() || a.channels.size() != b.channels.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bit_equal(a.positions[i], b.positions[i])) return false;
  for (std::size_t c = 0; c < a.channels.size(); ++c) {
    const auto& ca = a.channels[c];
    const auto& cb = b.channels[c];
    if (ca.name != cb.name || ca.freq != cb.freq || ca.values.size() != cb.values.size()) return false;
    for (std::size_t i = 0; i < ca.values.size(); ++i)
      if (std::bit_cast<std::uint32_t>(ca.values[i]) != std::bit_cast<std::uint32_t>(cb.values[i])) return false;
  }
  return true;
}

}  // namespace pyrgs
