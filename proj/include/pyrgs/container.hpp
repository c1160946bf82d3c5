#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pyrgs/cloud.hpp"
#include "pyrgs/codec.hpp"
#include "pyrgs/core.hpp"
#include "pyrgs/ggd.hpp"
#include "pyrgs/pyramid.hpp"

namespace pyrgs {

constexpr std::uint8_t kContainerMagic[8] = {'P', 'Y', 'R', 'G', 'S', 0, 0, 1};

struct QuantSpec {
  std::map<std::string, double> channel_q;  // explicit steps by coded channel name
  double q_scale = 1.0;                     // multiplies every effective step
  double lambda = 0.0005;                   // rate weight, carried as metadata
};

struct ChannelDesc {
  std::string name;
  FreqClass freq = FreqClass::kSmooth;
  double q = 1.0;  // effective quantization step
};

struct SegmentRecord {
  bool constant = false;
  double const_value = 0.0;  // exact coded value (offset for x/y/z, raw value otherwise)
  GgdParams params;
  std::int32_t s_min = 0;
  std::int32_t s_max = 0;
  std::uint64_t length = 0;  // coded byte length
};

struct ContainerHeader {
  int num_levels = 1;
  double base_resolution = 1.0;
  Vec3d origin;
  std::uint64_t total = 0;
  double lambda = 0.0005;
  std::vector<ChannelDesc> channels;                 // x, y, z, then attribute channels
  std::vector<std::uint64_t> counts;                 // per level
  std::vector<std::uint64_t> key_lengths;            // per level, bytes (0 when empty)
  std::vector<std::vector<SegmentRecord>> segments;  // [level][channel]; empty when count is 0
};

namespace detail {

// Reconstruction always lands on float32; base is the voxel center component
// for position channels and 0 for attribute channels.
inline float reconstruct_scalar(double base, std::int32_t s, double q) {
  return static_cast<float>(base + dequantize(s, q));
}

inline float reconstruct_constant(double base, double value) {
  return static_cast<float>(base + value);
}

// Nearest grid symbol, then a local search over the two neighbors measured
// against the float32 value actually reconstructed. Keeps the q/2 distortion
// bound tight even when s*q is not exactly representable.
inline std::int32_t quantize_refined(double v, double base, double q) {
  const double s0d = std::nearbyint((v - base) / q);
  if (!(std::abs(s0d) <= 2147483647.0))
    throw Error(Errc::quant_overflow, "quantized symbol exceeds 32-bit range (step too small)");
  const std::int64_t s0 = static_cast<std::int64_t>(s0d);
  auto err = [&](std::int64_t s) {
    return std::abs(v - static_cast<double>(reconstruct_scalar(base, static_cast<std::int32_t>(s), q)));
  };
  std::int64_t best = s0;
  double best_err = err(s0);
  for (std::int64_t cand : {s0 - 1, s0 + 1}) {
    if (cand < -2147483647ll || cand > 2147483647ll) continue;
    const double e = err(cand);
    if (e < best_err) {
      best = cand;
      best_err = e;
    }
  }
  return static_cast<std::int32_t>(best);
}

inline double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

// Default step: channel std divided by 64, snapped to the nearest power of
// two so grid values are exactly representable in float32 for moderate
// symbol magnitudes.
inline double default_step(double std_dev) {
  if (std_dev <= 0.0) return 1.0;
  return std::exp2(std::round(std::log2(std_dev / 64.0)));
}

inline void check_coded_channel_name(const std::string& name) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos)
    throw Error(Errc::invalid_cloud, "channel name '" + name + "' is not serializable");
}

}  // namespace detail

inline void validate_quant_spec(const QuantSpec& spec) {
  for (const auto& [name, q] : spec.channel_q)
    if (!(q > 0.0) || !std::isfinite(q))
      throw Error(Errc::invalid_config, "quantization step for '" + name + "' must be positive");
  if (!(spec.q_scale > 0.0) || !std::isfinite(spec.q_scale))
    throw Error(Errc::invalid_config, "q_scale must be positive");
  if (!(spec.lambda >= 0.0) || !std::isfinite(spec.lambda))
    throw Error(Errc::invalid_config, "lambda must be non-negative");
}

inline std::vector<std::uint8_t> compress(const Pyramid& pyramid, const QuantSpec& spec = {}) {
  validate_quant_spec(spec);
  validate_cloud(pyramid.source);
  const GaussianCloud& cloud = pyramid.source;
  const std::size_t n = cloud.size();
  const int num_levels = pyramid.config.num_levels;
  if (num_levels < 1 || static_cast<int>(pyramid.levels.size()) != num_levels)
    throw Error(Errc::invalid_config, "pyramid level list does not match its configured level count");
  if (!pyramid.config.bbox_origin)
    throw Error(Errc::invalid_config, "pyramid config is missing its voxel origin");
  if (!(pyramid.config.base_resolution > 0.0) || !std::isfinite(pyramid.config.base_resolution))
    throw Error(Errc::invalid_config, "base resolution must be positive and finite");

  // The container's segment order is the pyramid's partition in ascending
  // index order per level; verify it is one.
  {
    std::vector<bool> seen(n, false);
    std::size_t covered = 0;
    for (const auto& level : pyramid.levels) {
      for (std::size_t k = 0; k < level.size(); ++k) {
        const std::uint32_t idx = level[k];
        if (idx >= n || seen[idx])
          throw Error(Errc::invalid_config, "pyramid residual sets are not a partition of the cloud");
        if (k > 0 && level[k - 1] >= idx)
          throw Error(Errc::invalid_config, "pyramid residual sets must be in ascending index order");
        seen[idx] = true;
        ++covered;
      }
    }
    if (covered != n)
      throw Error(Errc::invalid_config, "pyramid residual sets are not a partition of the cloud");
  }
  for (const auto& ch : cloud.channels) {
    detail::check_coded_channel_name(ch.name);
    if (ch.name == "x" || ch.name == "y" || ch.name == "z")
      throw Error(Errc::invalid_cloud, "attribute channel may not shadow position channel '" + ch.name + "'");
  }

  const Vec3d origin = *pyramid.config.bbox_origin;
  const std::size_t num_channels = 3 + cloud.channels.size();

  ContainerHeader header;
  header.num_levels = num_levels;
  header.base_resolution = pyramid.config.base_resolution;
  header.origin = origin;
  header.total = n;
  header.lambda = spec.lambda;
  header.counts.resize(static_cast<std::size_t>(num_levels));
  header.key_lengths.assign(static_cast<std::size_t>(num_levels), 0);
  header.segments.resize(static_cast<std::size_t>(num_levels));

  // Voxel keys and centers per level, in segment order.
  std::vector<std::vector<VoxelCoord>> keys(static_cast<std::size_t>(num_levels));
  std::vector<std::vector<Vec3d>> centers(static_cast<std::size_t>(num_levels));
  for (int l = 0; l < num_levels; ++l) {
    const double res = level_resolution(header.base_resolution, l);
    const auto& members = pyramid.levels[static_cast<std::size_t>(l)];
    header.counts[static_cast<std::size_t>(l)] = members.size();
    keys[static_cast<std::size_t>(l)].reserve(members.size());
    centers[static_cast<std::size_t>(l)].reserve(members.size());
    for (std::uint32_t idx : members) {
      const VoxelCoord key = voxel_key(cloud.positions[idx], res, origin);
      keys[static_cast<std::size_t>(l)].push_back(key);
      centers[static_cast<std::size_t>(l)].push_back(voxel_center(key, res, origin));
    }
  }

  // Raw scalar and base arrays per (channel, level). For x/y/z the coded
  // value is the offset from the voxel center; base carries the center.
  auto channel_name = [&](std::size_t c) -> std::string {
    if (c == 0) return "x";
    if (c == 1) return "y";
    if (c == 2) return "z";
    return cloud.channels[c - 3].name;
  };
  auto channel_freq = [&](std::size_t c) {
    return c < 3 ? FreqClass::kHighFreq : cloud.channels[c - 3].freq;
  };
  auto scalar_of = [&](std::size_t c, std::uint32_t idx) -> double {
    switch (c) {
      case 0: return static_cast<double>(cloud.positions[idx].x);
      case 1: return static_cast<double>(cloud.positions[idx].y);
      case 2: return static_cast<double>(cloud.positions[idx].z);
      default: return static_cast<double>(cloud.channels[c - 3].values[idx]);
    }
  };
  auto base_of = [&](std::size_t c, int l, std::size_t k) -> double {
    if (c >= 3) return 0.0;
    const Vec3d& ctr = centers[static_cast<std::size_t>(l)][k];
    return c == 0 ? ctr.x : c == 1 ? ctr.y : ctr.z;
  };

  // Effective steps: explicit spec wins, otherwise std/64 snapped to a power
  // of two; q_scale multiplies either.
  header.channels.resize(num_channels);
  for (std::size_t c = 0; c < num_channels; ++c) {
    header.channels[c].name = channel_name(c);
    header.channels[c].freq = channel_freq(c);
  }
  {
    std::map<std::string, double> unused = spec.channel_q;
    for (std::size_t c = 0; c < num_channels; ++c) {
      auto it = spec.channel_q.find(header.channels[c].name);
      double q;
      if (it != spec.channel_q.end()) {
        q = it->second;
        unused.erase(it->first);
      } else {
        std::vector<double> coded;
        coded.reserve(n);
        for (int l = 0; l < num_levels; ++l) {
          const auto& members = pyramid.levels[static_cast<std::size_t>(l)];
          for (std::size_t k = 0; k < members.size(); ++k)
            coded.push_back(scalar_of(c, members[k]) - base_of(c, l, k));
        }
        q = detail::default_step(detail::population_std(coded));
      }
      header.channels[c].q = q * spec.q_scale;
    }
    if (!unused.empty())
      throw Error(Errc::invalid_config, "quantization step names unknown channel '" + unused.begin()->first + "'");
  }

  ByteWriter payload;
  for (int l = 0; l < num_levels; ++l) {
    const auto& members = pyramid.levels[static_cast<std::size_t>(l)];
    if (members.empty()) continue;
    const std::size_t key_start = payload.size();
    for (const VoxelCoord& key : keys[static_cast<std::size_t>(l)]) {
      payload.svarint(key.ix);
      payload.svarint(key.iy);
      payload.svarint(key.iz);
    }
    header.key_lengths[static_cast<std::size_t>(l)] = payload.size() - key_start;
    header.segments[static_cast<std::size_t>(l)].resize(num_channels);

    for (std::size_t c = 0; c < num_channels; ++c) {
      SegmentRecord& rec = header.segments[static_cast<std::size_t>(l)][c];
      const double q = header.channels[c].q;
      try {
        std::vector<double> coded(members.size());
        for (std::size_t k = 0; k < members.size(); ++k)
          coded[k] = scalar_of(c, members[k]) - base_of(c, l, k);

        bool all_equal = true;
        for (std::size_t k = 1; k < coded.size(); ++k)
          if (coded[k] != coded[0]) {
            all_equal = false;
            break;
          }
        if (all_equal) {
          rec.constant = true;
          rec.const_value = coded[0];
          continue;
        }

        std::vector<std::int32_t> symbols(members.size());
        for (std::size_t k = 0; k < members.size(); ++k)
          symbols[k] = detail::quantize_refined(scalar_of(c, members[k]), base_of(c, l, k), q);

        bool same_symbol = true;
        for (std::size_t k = 1; k < symbols.size(); ++k)
          if (symbols[k] != symbols[0]) {
            same_symbol = false;
            break;
          }
        if (same_symbol) {
          rec.constant = true;
          rec.const_value = dequantize(symbols[0], q);
          continue;
        }

        std::vector<double> deq(symbols.size());
        for (std::size_t k = 0; k < symbols.size(); ++k) deq[k] = dequantize(symbols[k], q);
        const double beta = header.channels[c].freq == FreqClass::kHighFreq ? 1.0 : 2.0;
        GgdParams params;
        params.beta = beta;
        params.mu = fit_location(deq, beta);
        params.alpha = fit_scale(deq, params.mu, beta);

        const auto [lo, hi] = std::minmax_element(symbols.begin(), symbols.end());
        const FrequencyTable table = FrequencyTable::from_ggd(params, q, *lo, *hi);
        const std::vector<std::uint8_t> bytes = encode_channel(symbols, table);

        rec.constant = false;
        rec.params = params;
        rec.s_min = *lo;
        rec.s_max = *hi;
        rec.length = bytes.size();
        payload.bytes(bytes);
      } catch (const Error& e) {
        if (e.level() >= 0) throw;
        throw Error(e.code(), e.what(), l, header.channels[c].name);
      }
    }
  }

  // magic + header + payload + checksum
  ByteWriter out;
  out.bytes(std::span<const std::uint8_t>(kContainerMagic, 8));
  out.u8(static_cast<std::uint8_t>(header.num_levels));
  out.f64(header.base_resolution);
  out.f64(header.origin.x);
  out.f64(header.origin.y);
  out.f64(header.origin.z);
  out.u64(header.total);
  out.f64(header.lambda);
  out.varint(num_channels);
  for (const ChannelDesc& ch : header.channels) {
    out.varint(ch.name.size());
    out.text(ch.name);
    out.u8(static_cast<std::uint8_t>(ch.freq));
    out.f64(ch.q);
  }
  for (int l = 0; l < num_levels; ++l) {
    out.varint(header.counts[static_cast<std::size_t>(l)]);
    if (header.counts[static_cast<std::size_t>(l)] == 0) continue;
    out.varint(header.key_lengths[static_cast<std::size_t>(l)]);
    for (const SegmentRecord& rec : header.segments[static_cast<std::size_t>(l)]) {
      out.u8(rec.constant ? 1 : 0);
      if (rec.constant) {
        out.f64(rec.const_value);
      } else {
        out.f64(rec.params.mu);
        out.f64(rec.params.alpha);
        out.u8(static_cast<std::uint8_t>(rec.params.beta));
        out.svarint(rec.s_min);
        out.svarint(rec.s_max);
        out.varint(rec.length);
      }
    }
  }
  const std::uint64_t checksum = fnv1a64(std::span<const std::uint8_t>(payload.data()));
  out.bytes(std::span<const std::uint8_t>(payload.data()));
  out.u64(checksum);
  return out.take();
}

struct DecodedContainer {
  ContainerHeader header;
  Pyramid pyramid;  // source holds the reconstructed cloud; levels are contiguous ranges
  std::vector<std::vector<VoxelCoord>> keys;
  std::vector<std::vector<std::vector<std::int32_t>>> symbols;  // [level][channel]; empty if constant
  std::uint64_t header_bytes = 0;
  std::uint64_t payload_bytes = 0;
};

namespace detail {

inline ContainerHeader parse_container_header(ByteReader& r, std::size_t file_size) {
  {
    auto magic = r.take(8);
    for (int i = 0; i < 5; ++i)
      if (magic[static_cast<std::size_t>(i)] != kContainerMagic[i])
        throw Error(Errc::bad_magic, "not a PYRGS container");
    if (magic[5] != 0 || magic[6] != 0) throw Error(Errc::bad_magic, "not a PYRGS container");
    if (magic[7] != 1) throw Error(Errc::bad_magic, "unsupported container version");
  }
  ContainerHeader h;
  h.num_levels = r.u8();
  if (h.num_levels < 1 || h.num_levels > kMaxLevels)
    throw Error(Errc::header_mismatch, "level count out of range");
  h.base_resolution = r.f64();
  if (!(h.base_resolution > 0.0) || !std::isfinite(h.base_resolution))
    throw Error(Errc::header_mismatch, "base resolution must be positive");
  h.origin = {r.f64(), r.f64(), r.f64()};
  if (!std::isfinite(h.origin.x) || !std::isfinite(h.origin.y) || !std::isfinite(h.origin.z))
    throw Error(Errc::header_mismatch, "non-finite voxel origin");
  h.total = r.u64();
  if (h.total >= (1ull << 32)) throw Error(Errc::header_mismatch, "point count too large");
  h.lambda = r.f64();
  if (!std::isfinite(h.lambda)) throw Error(Errc::header_mismatch, "non-finite lambda");
  const std::uint64_t num_channels = r.varint();
  if (num_channels < 3 || num_channels > 65536)
    throw Error(Errc::header_mismatch, "channel count out of range");
  h.channels.resize(num_channels);
  for (std::uint64_t c = 0; c < num_channels; ++c) {
    const std::uint64_t len = r.varint();
    if (len == 0 || len > 4096) throw Error(Errc::header_mismatch, "channel name length out of range");
    h.channels[c].name = r.text(len);
    for (char ch : h.channels[c].name)
      if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '\0')
        throw Error(Errc::header_mismatch, "channel name contains whitespace");
    const std::uint8_t freq = r.u8();
    if (freq > 1) throw Error(Errc::header_mismatch, "unknown frequency class");
    h.channels[c].freq = static_cast<FreqClass>(freq);
    h.channels[c].q = r.f64();
    if (!(h.channels[c].q > 0.0) || !std::isfinite(h.channels[c].q))
      throw Error(Errc::header_mismatch, "quantization step must be positive");
  }
  if (h.channels[0].name != "x" || h.channels[1].name != "y" || h.channels[2].name != "z")
    throw Error(Errc::header_mismatch, "container must code x, y, z first");
  for (std::size_t a = 0; a < h.channels.size(); ++a)
    for (std::size_t b = a + 1; b < h.channels.size(); ++b)
      if (h.channels[a].name == h.channels[b].name)
        throw Error(Errc::header_mismatch, "duplicate channel name in header");

  h.counts.resize(static_cast<std::size_t>(h.num_levels));
  h.key_lengths.assign(static_cast<std::size_t>(h.num_levels), 0);
  h.segments.resize(static_cast<std::size_t>(h.num_levels));
  std::uint64_t total_seen = 0;
  for (int l = 0; l < h.num_levels; ++l) {
    const std::uint64_t count = r.varint();
    if (count > h.total) throw Error(Errc::header_mismatch, "level count exceeds total");
    h.counts[static_cast<std::size_t>(l)] = count;
    total_seen += count;
    if (count == 0) continue;
    h.key_lengths[static_cast<std::size_t>(l)] = r.varint();
    if (h.key_lengths[static_cast<std::size_t>(l)] > file_size)
      throw Error(Errc::header_mismatch, "key block length exceeds file size");
    auto& segs = h.segments[static_cast<std::size_t>(l)];
    segs.resize(h.channels.size());
    for (std::size_t c = 0; c < h.channels.size(); ++c) {
      SegmentRecord& rec = segs[c];
      const std::uint8_t flags = r.u8();
      if (flags > 1) throw Error(Errc::header_mismatch, "unknown segment flags");
      rec.constant = flags == 1;
      if (rec.constant) {
        rec.const_value = r.f64();
        if (!std::isfinite(rec.const_value))
          throw Error(Errc::header_mismatch, "non-finite constant segment value");
      } else {
        rec.params.mu = r.f64();
        rec.params.alpha = r.f64();
        rec.params.beta = r.u8();
        if (!std::isfinite(rec.params.mu) || !(rec.params.alpha > 0.0) || !std::isfinite(rec.params.alpha))
          throw Error(Errc::header_mismatch, "invalid GGD parameters in segment record");
        if (rec.params.beta != 1.0 && rec.params.beta != 2.0)
          throw Error(Errc::header_mismatch, "segment shape must be 1 or 2");
        const std::int64_t s_min = r.svarint();
        const std::int64_t s_max = r.svarint();
        if (s_min < -2147483647ll || s_max > 2147483647ll || s_min > s_max)
          throw Error(Errc::header_mismatch, "invalid symbol range");
        if (s_max - s_min + 1 > 65536)
          throw Error(Errc::header_mismatch, "alphabet wider than 65536 symbols");
        rec.s_min = static_cast<std::int32_t>(s_min);
        rec.s_max = static_cast<std::int32_t>(s_max);
        rec.length = r.varint();
        if (rec.length > file_size) throw Error(Errc::header_mismatch, "segment length exceeds file size");
      }
    }
  }
  if (total_seen != h.total)
    throw Error(Errc::header_mismatch, "level counts do not sum to the total point count");
  return h;
}

}  // namespace detail

inline DecodedContainer decode_container(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  DecodedContainer out;
  out.header = detail::parse_container_header(r, data.size());
  const ContainerHeader& h = out.header;
  out.header_bytes = r.pos();

  std::uint64_t payload_len = 0;
  for (int l = 0; l < h.num_levels; ++l) {
    payload_len += h.key_lengths[static_cast<std::size_t>(l)];
    for (const auto& rec : h.segments[static_cast<std::size_t>(l)])
      if (!rec.constant) payload_len += rec.length;
  }
  if (r.remaining() < 8 || r.remaining() - 8 != payload_len)
    throw Error(r.remaining() < 8 + payload_len ? Errc::truncated_stream : Errc::header_mismatch,
                "payload size does not match header");
  out.payload_bytes = payload_len;
  auto payload = r.take(payload_len);
  const std::uint64_t declared = r.u64();
  if (fnv1a64(payload) != declared)
    throw Error(Errc::checksum_mismatch, "payload checksum mismatch");

  GaussianCloud cloud;
  cloud.positions.resize(h.total);
  for (std::size_t c = 3; c < h.channels.size(); ++c) {
    AttributeChannel ch;
    ch.name = h.channels[c].name;
    ch.freq = h.channels[c].freq;
    ch.values.resize(h.total);
    cloud.channels.push_back(std::move(ch));
  }

  out.keys.resize(static_cast<std::size_t>(h.num_levels));
  out.symbols.resize(static_cast<std::size_t>(h.num_levels));
  ByteReader pr(payload);
  std::size_t base_idx = 0;
  std::vector<std::vector<std::uint32_t>> levels(static_cast<std::size_t>(h.num_levels));
  for (int l = 0; l < h.num_levels; ++l) {
    const std::size_t count = h.counts[static_cast<std::size_t>(l)];
    auto& level_indices = levels[static_cast<std::size_t>(l)];
    level_indices.resize(count);
    for (std::size_t k = 0; k < count; ++k)
      level_indices[k] = static_cast<std::uint32_t>(base_idx + k);
    if (count == 0) continue;

    const double res = level_resolution(h.base_resolution, l);
    auto& keys = out.keys[static_cast<std::size_t>(l)];
    keys.resize(count);
    {
      ByteReader kr(pr.take(h.key_lengths[static_cast<std::size_t>(l)]));
      for (std::size_t k = 0; k < count; ++k) {
        keys[k].ix = kr.svarint();
        keys[k].iy = kr.svarint();
        keys[k].iz = kr.svarint();
      }
      if (kr.remaining() != 0)
        throw Error(Errc::malformed_payload, "key block has trailing bytes", l, "");
    }

    out.symbols[static_cast<std::size_t>(l)].resize(h.channels.size());
    for (std::size_t c = 0; c < h.channels.size(); ++c) {
      const SegmentRecord& rec = h.segments[static_cast<std::size_t>(l)][c];
      const double q = h.channels[c].q;
      auto base_at = [&](std::size_t k) -> double {
        if (c >= 3) return 0.0;
        const Vec3d ctr = voxel_center(keys[k], res, h.origin);
        return c == 0 ? ctr.x : c == 1 ? ctr.y : ctr.z;
      };
      auto store = [&](std::size_t k, float value) {
        const std::size_t idx = base_idx + k;
        if (c == 0) cloud.positions[idx].x = value;
        else if (c == 1) cloud.positions[idx].y = value;
        else if (c == 2) cloud.positions[idx].z = value;
        else cloud.channels[c - 3].values[idx] = value;
      };
      try {
        if (rec.constant) {
          for (std::size_t k = 0; k < count; ++k)
            store(k, detail::reconstruct_constant(base_at(k), rec.const_value));
        } else {
          const FrequencyTable table = FrequencyTable::from_ggd(rec.params, q, rec.s_min, rec.s_max);
          auto seg = pr.take(rec.length);
          std::vector<std::int32_t> symbols = decode_channel(seg, count, table);
          for (std::size_t k = 0; k < count; ++k)
            store(k, detail::reconstruct_scalar(base_at(k), symbols[k], q));
          out.symbols[static_cast<std::size_t>(l)][c] = std::move(symbols);
        }
        for (std::size_t k = 0; k < count; ++k) {
          const std::size_t idx = base_idx + k;
          const float v = c == 0   ? cloud.positions[idx].x
                          : c == 1 ? cloud.positions[idx].y
                          : c == 2 ? cloud.positions[idx].z
                                   : cloud.channels[c - 3].values[idx];
          if (!std::isfinite(v))
            throw Error(Errc::malformed_payload, "segment reconstructs a non-finite value");
        }
      } catch (const Error& e) {
        if (e.level() >= 0) throw;
        throw Error(e.code(), e.what(), l, h.channels[c].name);
      }
    }
    base_idx += count;
  }

  out.pyramid.config.base_resolution = h.base_resolution;
  out.pyramid.config.num_levels = h.num_levels;
  out.pyramid.config.bbox_origin = h.origin;
  out.pyramid.config.seed = 0;
  out.pyramid.levels_auto = false;
  out.pyramid.levels = std::move(levels);
  out.pyramid.source = std::move(cloud);
  return out;
}

inline Pyramid decompress(std::span<const std::uint8_t> data) {
  DecodedContainer dec = decode_container(data);
  return std::move(dec.pyramid);
}

struct SegmentStats {
  int level = 0;
  std::string channel;
  std::uint64_t count = 0;
  bool constant = false;
  std::uint64_t coded_bytes = 0;
  double actual_bits = 0.0;
  double estimate_bits = 0.0;  // GGD model, sum of -log2 bin mass
  double table_bits = 0.0;     // 16-bit table ideal length
};

struct ChannelStats {
  std::string name;
  double q = 1.0;
  FreqClass freq = FreqClass::kSmooth;
  std::uint64_t coded_bytes = 0;
  double estimate_bits = 0.0;
  double mse = 0.0;
  double max_error = 0.0;
  std::optional<double> psnr_db;
};

struct StatsReport {
  std::uint64_t container_bytes = 0;
  std::uint64_t header_bytes = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t primitive_count = 0;
  std::optional<double> bits_per_primitive;
  double lambda = 0.0;
  int num_levels = 1;
  double base_resolution = 1.0;
  std::vector<std::uint64_t> level_counts;
  std::vector<SegmentStats> segments;
  std::vector<ChannelStats> channels;
  double total_mse = 0.0;
};

// Rate and distortion accounting against the original cloud. The original is
// re-partitioned with the header's pyramid config, which must reproduce the
// container's level structure exactly; the decoded points then align with the
// originals per level in ascending index order.
inline StatsReport stats(std::span<const std::uint8_t> data, const GaussianCloud& original) {
  DecodedContainer dec = decode_container(data);
  const ContainerHeader& h = dec.header;
  validate_cloud(original);
  if (original.size() != h.total)
    throw Error(Errc::mismatched_cloud, "original cloud has " + std::to_string(original.size()) +
                                            " points, container has " + std::to_string(h.total));
  if (original.channels.size() + 3 != h.channels.size())
    throw Error(Errc::mismatched_cloud, "original cloud channel schema differs from container");
  for (std::size_t c = 3; c < h.channels.size(); ++c)
    if (original.channels[c - 3].name != h.channels[c].name)
      throw Error(Errc::mismatched_cloud, "original cloud channel schema differs from container");

  PyramidConfig cfg;
  cfg.base_resolution = h.base_resolution;
  cfg.num_levels = h.num_levels;
  cfg.bbox_origin = h.origin;
  const Pyramid rebuilt = build_pyramid(original, cfg);
  for (int l = 0; l < h.num_levels; ++l) {
    const auto& members = rebuilt.levels[static_cast<std::size_t>(l)];
    if (members.size() != h.counts[static_cast<std::size_t>(l)])
      throw Error(Errc::mismatched_cloud, "original cloud does not reproduce the container's level counts");
    const double res = level_resolution(h.base_resolution, l);
    for (std::size_t k = 0; k < members.size(); ++k)
      if (!(voxel_key(original.positions[members[k]], res, h.origin) == dec.keys[static_cast<std::size_t>(l)][k]))
        throw Error(Errc::mismatched_cloud, "original cloud does not reproduce the container's voxel keys");
  }

  StatsReport rep;
  rep.container_bytes = data.size();
  rep.header_bytes = dec.header_bytes;
  rep.payload_bytes = dec.payload_bytes;
  rep.primitive_count = h.total;
  if (h.total > 0)
    rep.bits_per_primitive = 8.0 * static_cast<double>(data.size()) / static_cast<double>(h.total);
  rep.lambda = h.lambda;
  rep.num_levels = h.num_levels;
  rep.base_resolution = h.base_resolution;
  rep.level_counts = h.counts;

  const GaussianCloud& decoded = dec.pyramid.source;
  auto original_scalar = [&](std::size_t c, std::uint32_t idx) -> double {
    switch (c) {
      case 0: return static_cast<double>(original.positions[idx].x);
      case 1: return static_cast<double>(original.positions[idx].y);
      case 2: return static_cast<double>(original.positions[idx].z);
      default: return static_cast<double>(original.channels[c - 3].values[idx]);
    }
  };
  auto decoded_scalar = [&](std::size_t c, std::size_t idx) -> double {
    switch (c) {
      case 0: return static_cast<double>(decoded.positions[idx].x);
      case 1: return static_cast<double>(decoded.positions[idx].y);
      case 2: return static_cast<double>(decoded.positions[idx].z);
      default: return static_cast<double>(decoded.channels[c - 3].values[idx]);
    }
  };

  rep.channels.resize(h.channels.size());
  std::vector<double> sq_sum(h.channels.size(), 0.0);
  double total_sq = 0.0;
  std::uint64_t total_scalars = 0;
  for (std::size_t c = 0; c < h.channels.size(); ++c) {
    rep.channels[c].name = h.channels[c].name;
    rep.channels[c].q = h.channels[c].q;
    rep.channels[c].freq = h.channels[c].freq;
  }

  std::size_t base_idx = 0;
  for (int l = 0; l < h.num_levels; ++l) {
    const std::size_t count = h.counts[static_cast<std::size_t>(l)];
    if (count == 0) continue;
    const auto& members = rebuilt.levels[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < h.channels.size(); ++c) {
      const SegmentRecord& rec = h.segments[static_cast<std::size_t>(l)][c];
      SegmentStats seg;
      seg.level = l;
      seg.channel = h.channels[c].name;
      seg.count = count;
      seg.constant = rec.constant;
      if (!rec.constant) {
        seg.coded_bytes = rec.length;
        seg.actual_bits = 8.0 * static_cast<double>(rec.length);
        const auto& symbols = dec.symbols[static_cast<std::size_t>(l)][c];
        std::vector<double> deq(symbols.size());
        for (std::size_t k = 0; k < symbols.size(); ++k)
          deq[k] = dequantize(symbols[k], h.channels[c].q);
        seg.estimate_bits = rate_bits(deq, h.channels[c].q, rec.params);
        const FrequencyTable table =
            FrequencyTable::from_ggd(rec.params, h.channels[c].q, rec.s_min, rec.s_max);
        seg.table_bits = table.bits_estimate(symbols);
        rep.channels[c].coded_bytes += rec.length;
        rep.channels[c].estimate_bits += seg.estimate_bits;
      }
      for (std::size_t k = 0; k < count; ++k) {
        const double err = original_scalar(c, members[k]) - decoded_scalar(c, base_idx + k);
        sq_sum[c] += err * err;
        total_sq += err * err;
        rep.channels[c].max_error = std::max(rep.channels[c].max_error, std::abs(err));
      }
      total_scalars += count;
      rep.segments.push_back(std::move(seg));
    }
    base_idx += count;
  }

  for (std::size_t c = 0; c < h.channels.size(); ++c) {
    rep.channels[c].mse = h.total == 0 ? 0.0 : sq_sum[c] / static_cast<double>(h.total);
    double lo = 0.0, hi = 0.0;
    for (std::uint32_t i = 0; i < h.total; ++i) {
      const double v = original_scalar(c, i);
      if (i == 0) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double range = hi - lo;
    if (rep.channels[c].mse > 0.0 && range > 0.0)
      rep.channels[c].psnr_db = 10.0 * std::log10(range * range / rep.channels[c].mse);
  }
  rep.total_mse = total_scalars == 0 ? 0.0 : total_sq / static_cast<double>(total_scalars);
  return rep;
}

inline nlohmann::json stats_json(const StatsReport& rep) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : rep.segments) {
    segments.push_back({{"level", s.level},
                        {"channel", s.channel},
                        {"count", s.count},
                        {"constant", s.constant},
                        {"coded_bytes", s.coded_bytes},
                        {"actual_bits", s.actual_bits},
                        {"estimate_bits", s.estimate_bits},
                        {"table_bits", s.table_bits}});
  }
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : rep.channels) {
    nlohmann::json j{{"name", c.name},
                     {"q", c.q},
                     {"freq", freq_class_name(c.freq)},
                     {"coded_bytes", c.coded_bytes},
                     {"estimate_bits", c.estimate_bits},
                     {"mse", c.mse},
                     {"max_error", c.max_error}};
    j["psnr_db"] = c.psnr_db ? nlohmann::json(*c.psnr_db) : nlohmann::json(nullptr);
    channels.push_back(std::move(j));
  }
  nlohmann::json j{{"container_bytes", rep.container_bytes},
                   {"header_bytes", rep.header_bytes},
                   {"payload_bytes", rep.payload_bytes},
                   {"primitive_count", rep.primitive_count},
                   {"lambda", rep.lambda},
                   {"num_levels", rep.num_levels},
                   {"base_resolution", rep.base_resolution},
                   {"level_counts", rep.level_counts},
                   {"segments", segments},
                   {"channels", channels},
                   {"total_mse", rep.total_mse}};
  j["bits_per_primitive"] =
      rep.bits_per_primitive ? nlohmann::json(*rep.bits_per_primitive) : nlohmann::json(nullptr);
  return j;
}

}  // namespace pyrgs
