#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "pyrgs/cloud.hpp"
#include "pyrgs/core.hpp"

namespace pyrgs {

constexpr int kAutoLevels = 0;      // sentinel for PyramidConfig::num_levels
constexpr int kMaxLevels = 40;      // explicit level cap, keeps voxel coords in int64
constexpr int kAutoLevelCap = 12;   // auto resolution clamps into [1, 12]

struct PyramidConfig {
  double base_resolution = 0.0;          // coarsest cell edge, world units
  int num_levels = kAutoLevels;          // kAutoLevels resolves from point spacing
  std::optional<Vec3d> bbox_origin;      // min corner for voxel indexing
  std::uint64_t seed = 0;                // sampling seed for auto level resolution
};

struct VoxelCoord {
  std::int64_t ix = 0, iy = 0, iz = 0;
  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
};

struct VoxelIndex {
  int level = 0;
  VoxelCoord coord;
};

struct VoxelCoordHash {
  std::size_t operator()(const VoxelCoord& c) const {
    auto mix = [](std::uint64_t x) {
      x += 0x9E3779B97F4A7C15ull;
      x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
      x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
      return x ^ (x >> 31);
    };
    std::uint64_t h = mix(static_cast<std::uint64_t>(c.ix));
    h = mix(h ^ static_cast<std::uint64_t>(c.iy));
    h = mix(h ^ static_cast<std::uint64_t>(c.iz));
    return static_cast<std::size_t>(h);
  }
};

struct Pyramid {
  PyramidConfig config;                         // resolved: num_levels and bbox_origin set
  bool levels_auto = false;                     // whether num_levels came from auto resolution
  std::vector<std::vector<std::uint32_t>> levels;  // residual sets, ascending indices
  GaussianCloud source;
};

inline double level_resolution(double base_resolution, int level) {
  return std::ldexp(base_resolution, -level);
}

inline VoxelCoord voxel_key(const Vec3d& position, double resolution, const Vec3d& origin) {
  if (!(resolution > 0.0)) throw Error(Errc::invalid_config, "voxel resolution must be positive");
  auto cell = [&](double p, double o) {
    const double f = std::floor((p - o) / resolution);
    if (!(std::abs(f) <= 9.0e15))
      throw Error(Errc::out_of_range, "voxel coordinate overflows (resolution too small for extent)");
    return static_cast<std::int64_t>(f);
  };
  return {cell(position.x, origin.x), cell(position.y, origin.y), cell(position.z, origin.z)};
}

inline VoxelCoord voxel_key(const Vec3f& position, double resolution, const Vec3d& origin) {
  return voxel_key(to_double(position), resolution, origin);
}

inline Vec3d voxel_center(const VoxelCoord& c, double resolution, const Vec3d& origin) {
  return {origin.x + (static_cast<double>(c.ix) + 0.5) * resolution,
          origin.y + (static_cast<double>(c.iy) + 0.5) * resolution,
          origin.z + (static_cast<double>(c.iz) + 0.5) * resolution};
}

// Member nearest to the voxel center wins; equal distances go to the lowest
// point index.
inline std::uint32_t select_representative(std::span<const std::uint32_t> members,
                                           std::span<const Vec3f> positions, const Vec3d& center) {
  if (members.empty()) throw Error(Errc::empty_input, "cannot pick a representative of an empty voxel");
  std::uint32_t best = 0;
  double best_d2 = 0.0;
  bool first = true;
  for (std::uint32_t idx : members) {
    if (idx >= positions.size()) throw Error(Errc::out_of_range, "representative candidate index out of range");
    const double d2 = squared_norm(to_double(positions[idx]) - center);
    if (first || d2 < best_d2 || (d2 == best_d2 && idx < best)) {
      best = idx;
      best_d2 = d2;
      first = false;
    }
  }
  return best;
}

// L = clamp(ceil(log2(rho_0 / s_med)), 1, 12) with s_med the lower-median
// nearest-neighbor distance over a seeded sample of at most 10000 points.
inline int auto_levels(const GaussianCloud& cloud, double base_resolution, std::uint64_t seed) {
  if (cloud.size() == 0) throw Error(Errc::empty_input, "auto level resolution needs at least one point");
  if (!(base_resolution > 0.0) || !std::isfinite(base_resolution))
    throw Error(Errc::invalid_config, "base resolution must be positive and finite");
  if (cloud.size() == 1) return 1;

  const std::size_t n = cloud.size();
  const std::size_t sample_size = std::min<std::size_t>(n, 10000);
  std::vector<std::uint32_t> pick(n);
  for (std::size_t i = 0; i < n; ++i) pick[i] = static_cast<std::uint32_t>(i);
  // Partial Fisher-Yates; modular draw keeps the sequence platform-stable.
  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < sample_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(gen() % static_cast<std::uint64_t>(n - i));
    std::swap(pick[i], pick[j]);
  }

  std::vector<Vec3d> pts(sample_size);
  for (std::size_t i = 0; i < sample_size; ++i) pts[i] = to_double(cloud.positions[pick[i]]);
  std::vector<double> nn(sample_size, std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < sample_size; ++a) {
    for (std::size_t b = a + 1; b < sample_size; ++b) {
      const double d2 = squared_norm(pts[a] - pts[b]);
      if (d2 < nn[a]) nn[a] = d2;
      if (d2 < nn[b]) nn[b] = d2;
    }
  }
  const std::size_t k = (sample_size - 1) / 2;
  std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(k), nn.end());
  const double s_med = std::sqrt(nn[k]);
  if (s_med == 0.0) return kAutoLevelCap;
  const double raw = std::ceil(std::log2(base_resolution / s_med));
  if (!(raw >= 1.0)) return 1;
  if (!(raw <= static_cast<double>(kAutoLevelCap))) return kAutoLevelCap;
  return static_cast<int>(raw);
}

namespace detail {

struct VoxelBest {
  double d2 = 0.0;
  std::uint32_t idx = 0;
};

}  // namespace detail

// Each point gets the smallest level at which it is its voxel's
// representative; points never selected land in the finest residual set.
// The residual sets partition [0, N) exactly.
inline Pyramid build_pyramid(const GaussianCloud& cloud, const PyramidConfig& config) {
  if (!(config.base_resolution > 0.0) || !std::isfinite(config.base_resolution))
    throw Error(Errc::invalid_config, "base resolution must be positive and finite");
  if (config.num_levels != kAutoLevels && (config.num_levels < 1 || config.num_levels > kMaxLevels))
    throw Error(Errc::invalid_config,
                "level count must be in [1, " + std::to_string(kMaxLevels) + "] or auto");

  Pyramid out;
  out.config = config;
  out.levels_auto = config.num_levels == kAutoLevels;
  if (out.levels_auto)
    out.config.num_levels = cloud.size() == 0 ? 1 : auto_levels(cloud, config.base_resolution, config.seed);
  if (!out.config.bbox_origin) {
    Vec3d origin{0, 0, 0};
    if (cloud.size() > 0) {
      const Bbox b = bbox(cloud);
      const double pad = 1e-6 * config.base_resolution;
      origin = {b.min.x - pad, b.min.y - pad, b.min.z - pad};
    }
    out.config.bbox_origin = origin;
  }

  const std::size_t n = cloud.size();
  const int num_levels = out.config.num_levels;
  const Vec3d origin = *out.config.bbox_origin;
  std::vector<std::int32_t> level_of(n, -1);

  std::unordered_map<VoxelCoord, detail::VoxelBest, VoxelCoordHash> best;
  for (int l = 0; l < num_levels; ++l) {
    const double res = level_resolution(out.config.base_resolution, l);
    best.clear();
    best.reserve(n * 2 + 16);
    for (std::size_t i = 0; i < n; ++i) {
      const VoxelCoord key = voxel_key(cloud.positions[i], res, origin);
      const double d2 = squared_norm(to_double(cloud.positions[i]) - voxel_center(key, res, origin));
      auto [it, inserted] = best.try_emplace(key, detail::VoxelBest{d2, static_cast<std::uint32_t>(i)});
      if (!inserted && d2 < it->second.d2) it->second = {d2, static_cast<std::uint32_t>(i)};
    }
    for (const auto& [key, winner] : best)
      if (level_of[winner.idx] < 0) level_of[winner.idx] = l;
  }

  out.levels.assign(static_cast<std::size_t>(num_levels), {});
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t l = level_of[i] < 0 ? num_levels - 1 : level_of[i];
    out.levels[static_cast<std::size_t>(l)].push_back(static_cast<std::uint32_t>(i));
  }
  out.source = cloud;
  return out;
}

inline std::vector<std::uint32_t> cumulative_set(const Pyramid& pyramid, int level) {
  if (level < 0 || level >= pyramid.config.num_levels)
    throw Error(Errc::out_of_range, "level " + std::to_string(level) + " out of range");
  std::vector<std::uint32_t> out;
  for (int l = 0; l <= level; ++l)
    out.insert(out.end(), pyramid.levels[static_cast<std::size_t>(l)].begin(),
               pyramid.levels[static_cast<std::size_t>(l)].end());
  std::sort(out.begin(), out.end());
  return out;
}

inline GaussianCloud reconstruct(const Pyramid& pyramid) {
  const auto all = cumulative_set(pyramid, pyramid.config.num_levels - 1);
  return subset(pyramid.source, all);
}

inline nlohmann::json pyramid_manifest(const Pyramid& pyramid) {
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
    levels.push_back({{"level", l},
                      {"resolution", level_resolution(pyramid.config.base_resolution, static_cast<int>(l))},
                      {"count", pyramid.levels[l].size()}});
  }
  const Vec3d o = pyramid.config.bbox_origin.value_or(Vec3d{});
  return nlohmann::json{{"base_resolution", pyramid.config.base_resolution},
                        {"num_levels", pyramid.config.num_levels},
                        {"levels_mode", pyramid.levels_auto ? "auto" : "explicit"},
                        {"bbox_origin", {o.x, o.y, o.z}},
                        {"seed", pyramid.config.seed},
                        {"total_points", pyramid.source.size()},
                        {"levels", levels}};
}

}  // namespace pyrgs
