#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "json.hpp"
#include "pyrgs/cameras.hpp"
#include "pyrgs/cloud.hpp"
#include "pyrgs/core.hpp"
#include "pyrgs/pyramid.hpp"

namespace pyrgs {

struct PerceptionParams {
  double sigma_z_thresh = 50.0;
  double alpha_depth = 0.7;
  double beta_coverage = 0.5;
  double d_std = 1.0;  // reference distance; callers default it to the scene bbox diagonal
};

inline void validate_params(const PerceptionParams& p) {
  if (!(p.sigma_z_thresh > 0.0) || !std::isfinite(p.sigma_z_thresh))
    throw Error(Errc::invalid_config, "sigma_z threshold must be positive");
  if (!(p.alpha_depth >= 0.0) || !std::isfinite(p.alpha_depth))
    throw Error(Errc::invalid_config, "alpha_depth must be non-negative");
  if (!(p.beta_coverage >= 0.0) || !(p.beta_coverage <= 1.0))
    throw Error(Errc::invalid_config, "beta_coverage must lie in [0, 1]");
  if (!(p.d_std > 0.0) || !std::isfinite(p.d_std))
    throw Error(Errc::invalid_config, "d_std must be positive");
}

// Dominant eigenvector of the covariance of the input vectors, via cyclic
// Jacobi sweeps on the 3x3 covariance. Sign is fixed so the component of
// largest magnitude is positive.
inline Vec3d principal_axis(std::span<const Vec3d> vectors) {
  if (vectors.size() < 2)
    throw Error(Errc::degenerate_dispersion, "principal axis needs at least 2 vectors");
  Vec3d mean{};
  for (const Vec3d& v : vectors) mean = mean + v;
  mean = mean * (1.0 / static_cast<double>(vectors.size()));

  double ref2 = 1.0;
  for (const Vec3d& v : vectors) ref2 = std::max(ref2, squared_norm(v));
  double spread2 = 0.0;
  for (const Vec3d& v : vectors) spread2 = std::max(spread2, squared_norm(v - mean));
  if (spread2 <= 1e-24 * ref2)
    throw Error(Errc::degenerate_dispersion, "principal axis undefined for coincident vectors");

  double a[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  for (const Vec3d& v : vectors) {
    const Vec3d d = v - mean;
    const double c[3] = {d.x, d.y, d.z};
    for (int r = 0; r < 3; ++r)
      for (int s = r; s < 3; ++s) a[r][s] += c[r] * c[s];
  }
  const double inv_n = 1.0 / static_cast<double>(vectors.size());
  for (int r = 0; r < 3; ++r)
    for (int s = r; s < 3; ++s) a[r][s] *= inv_n;
  a[1][0] = a[0][1];
  a[2][0] = a[0][2];
  a[2][1] = a[1][2];

  double scale = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s) scale = std::max(scale, std::abs(a[r][s]));
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s) a[r][s] /= scale;

  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  static constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int sweep = 0; sweep < 50; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if (off < 1e-30) break;
    for (const auto& pq : kPairs) {
      const int p = pq[0], q = pq[1];
      if (a[p][q] == 0.0) continue;
      const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
      const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
      const double c = 1.0 / std::sqrt(t * t + 1.0);
      const double s = t * c;
      for (int k = 0; k < 3; ++k) {
        const double akp = a[k][p], akq = a[k][q];
        a[k][p] = c * akp - s * akq;
        a[k][q] = s * akp + c * akq;
      }
      for (int k = 0; k < 3; ++k) {
        const double apk = a[p][k], aqk = a[q][k];
        a[p][k] = c * apk - s * aqk;
        a[q][k] = s * apk + c * aqk;
      }
      for (int k = 0; k < 3; ++k) {
        const double vkp = v[k][p], vkq = v[k][q];
        v[k][p] = c * vkp - s * vkq;
        v[k][q] = s * vkp + c * vkq;
      }
    }
  }

  int top = 0;
  for (int k = 1; k < 3; ++k)
    if (a[k][k] > a[top][top]) top = k;
  Vec3d axis{v[0][top], v[1][top], v[2][top]};
  const double len = norm(axis);
  axis = axis * (1.0 / len);
  const double mags[3] = {std::abs(axis.x), std::abs(axis.y), std::abs(axis.z)};
  int big = 0;
  for (int k = 1; k < 3; ++k)
    if (mags[k] > mags[big]) big = k;
  const double lead = (big == 0 ? axis.x : big == 1 ? axis.y : axis.z);
  if (lead < 0.0) axis = axis * -1.0;
  return axis;
}

struct DepthSpread {
  double sigma_z = 0.0;
  bool degenerate = false;
  Vec3d axis;
  std::size_t anchors_used = 0;
};

// Population std of |d_k . m| over the camera's in-frustum anchors (all
// anchors when the frustum is empty). Fewer than two usable anchors, or a
// dispersion too degenerate for a principal axis, yields sigma_z = 0 with the
// degenerate flag set.
inline DepthSpread depth_spread(std::span<const Vec3f> anchors, const Camera& camera) {
  std::vector<Vec3d> d;
  d.reserve(anchors.size());
  for (const Vec3f& p : anchors)
    if (in_frustum(camera, p)) d.push_back(to_double(p) - camera.center);
  if (d.empty())
    for (const Vec3f& p : anchors) d.push_back(to_double(p) - camera.center);

  DepthSpread out;
  out.anchors_used = d.size();
  if (d.size() < 2) {
    out.degenerate = true;
    return out;
  }
  Vec3d m;
  try {
    m = principal_axis(d);
  } catch (const Error&) {
    out.degenerate = true;
    return out;
  }
  out.axis = m;
  std::vector<double> z(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) z[i] = std::abs(dot(d[i], m));
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  var /= static_cast<double>(z.size());
  out.sigma_z = std::sqrt(var);
  return out;
}

inline double depth_factor(double sigma_z, const PerceptionParams& params) {
  validate_params(params);
  if (!(sigma_z >= 0.0)) throw Error(Errc::invalid_argument, "sigma_z must be non-negative");
  return 1.0 + params.alpha_depth * std::max(0.0, sigma_z / params.sigma_z_thresh - 1.0);
}

struct LevelAssignment {
  double l_real = 0.0;
  int l_int = 0;
};

inline LevelAssignment pyramid_level(const Vec3d& anchor, const Camera& camera, double f_depth,
                                     const PerceptionParams& params, int num_levels) {
  validate_params(params);
  if (num_levels < 1) throw Error(Errc::invalid_config, "num_levels must be at least 1");
  if (!(f_depth >= 1.0)) throw Error(Errc::invalid_argument, "f_depth must be at least 1");
  const double dist = norm(anchor - camera.center);
  if (dist == 0.0)
    return {std::numeric_limits<double>::infinity(), num_levels - 1};
  const double l_real = std::log2(params.d_std / (dist * f_depth));
  int l_int;
  if (l_real >= static_cast<double>(num_levels - 1)) l_int = num_levels - 1;
  else if (l_real < 0.0) l_int = 0;
  else l_int = static_cast<int>(std::floor(l_real));
  return {l_real, l_int};
}

struct LevelMatrixEntry {
  std::uint32_t anchor = 0;
  std::uint32_t camera = 0;
  int level = 0;
};

struct PerceptionReport {
  std::vector<double> sigma_z;              // per camera
  std::vector<double> depth_factors;        // per camera
  std::vector<bool> degenerate_flags;       // per camera
  std::vector<LevelMatrixEntry> level_matrix;  // in-frustum pairs, camera-major
  std::vector<double> coverage;             // per anchor
  std::vector<std::uint64_t> visible_counts;  // per camera
  double coverage_mean = 0.0;
  double tau_old = 0.0;
  double tau_new = 0.0;
  std::vector<bool> camera_mask;
  int current_level = 0;
  int num_levels = 1;
};

inline std::pair<double, double> update_threshold(std::span<const std::uint64_t> per_camera_counts,
                                                  double coverage_mean) {
  if (per_camera_counts.empty())
    throw Error(Errc::empty_input, "threshold update needs at least one camera count");
  if (!(coverage_mean >= 0.0))
    throw Error(Errc::invalid_argument, "aggregated coverage must be non-negative");
  double mean = 0.0;
  for (std::uint64_t c : per_camera_counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(per_camera_counts.size());
  return {mean, (1.0 + coverage_mean) * mean};
}

inline std::vector<bool> camera_mask(std::span<const std::uint64_t> per_camera_counts, double tau_new) {
  if (!(tau_new >= 0.0)) throw Error(Errc::invalid_argument, "tau_new must be non-negative");
  std::vector<bool> mask(per_camera_counts.size());
  for (std::size_t j = 0; j < per_camera_counts.size(); ++j)
    mask[j] = static_cast<double>(per_camera_counts[j]) >= tau_new;
  return mask;
}

// Full scene pass: per-camera depth spread and compensation, per-pair
// integer levels for in-frustum anchors, visibility at the current level,
// coverage scores, threshold update, and the camera mask.
inline PerceptionReport perceive(const Pyramid& pyramid, std::span<const Camera> cameras,
                                 int current_level, const PerceptionParams& params) {
  validate_params(params);
  if (cameras.empty()) throw Error(Errc::empty_input, "perception needs at least one camera");
  if (current_level < 0 || current_level >= pyramid.config.num_levels)
    throw Error(Errc::out_of_range, "current level out of range");

  const auto& positions = pyramid.source.positions;
  const std::size_t n = positions.size();
  const std::size_t m = cameras.size();

  PerceptionReport rep;
  rep.current_level = current_level;
  rep.num_levels = pyramid.config.num_levels;
  rep.sigma_z.resize(m);
  rep.depth_factors.resize(m);
  rep.degenerate_flags.resize(m);
  rep.visible_counts.assign(m, 0);
  std::vector<std::uint64_t> n_vis(n, 0);

  for (std::size_t j = 0; j < m; ++j) {
    const Camera& cam = cameras[j];
    const DepthSpread ds = depth_spread(positions, cam);
    rep.sigma_z[j] = ds.sigma_z;
    rep.degenerate_flags[j] = ds.degenerate;
    const double fd = depth_factor(ds.sigma_z, params);
    rep.depth_factors[j] = fd;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_frustum(cam, positions[i])) continue;
      const LevelAssignment la =
          pyramid_level(to_double(positions[i]), cam, fd, params, pyramid.config.num_levels);
      rep.level_matrix.push_back(
          {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), la.l_int});
      if (la.l_int <= current_level) {
        ++n_vis[i];
        ++rep.visible_counts[j];
      }
    }
  }

  rep.coverage.resize(n);
  double cov_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rep.coverage[i] = params.beta_coverage * static_cast<double>(n_vis[i]) / static_cast<double>(m);
    cov_sum += rep.coverage[i];
  }
  rep.coverage_mean = n == 0 ? 0.0 : cov_sum / static_cast<double>(n);
  const auto taus = update_threshold(rep.visible_counts, rep.coverage_mean);
  rep.tau_old = taus.first;
  rep.tau_new = taus.second;
  rep.camera_mask = camera_mask(rep.visible_counts, rep.tau_new);
  return rep;
}

struct CoverageScores {
  std::vector<double> coverage;
  std::vector<std::uint64_t> visible_counts;
};

inline CoverageScores coverage_scores(const Pyramid& pyramid, std::span<const Camera> cameras,
                                      int current_level, const PerceptionParams& params) {
  PerceptionReport rep = perceive(pyramid, cameras, current_level, params);
  return {std::move(rep.coverage), std::move(rep.visible_counts)};
}

// Entries beyond the gate keep reports readable for large scenes; the CSV
// export carries the full matrix when needed.
inline nlohmann::json report_json(const PerceptionReport& rep, std::size_t level_matrix_gate = 10000) {
  nlohmann::json j{{"sigma_z", rep.sigma_z},
                   {"depth_factors", rep.depth_factors},
                   {"degenerate_flags", rep.degenerate_flags},
                   {"coverage", rep.coverage},
                   {"coverage_mean", rep.coverage_mean},
                   {"visible_counts", rep.visible_counts},
                   {"tau_old", rep.tau_old},
                   {"tau_new", rep.tau_new},
                   {"camera_mask", rep.camera_mask},
                   {"current_level", rep.current_level},
                   {"num_levels", rep.num_levels},
                   {"level_matrix_entries", rep.level_matrix.size()}};
  if (rep.level_matrix.size() <= level_matrix_gate) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : rep.level_matrix) entries.push_back({e.anchor, e.camera, e.level});
    j["level_matrix"] = std::move(entries);
  }
  return j;
}

}  // namespace pyrgs
