// Release gate: eight end-to-end checks, one verdict line each. Runs without
// any test framework so the output stays a plain, greppable transcript.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <pyrgs/pyrgs.hpp>

namespace {

struct Verdict {
  bool pass = true;
  std::string note;

  void require(bool cond, const std::string& why) {
    if (pass && !cond) {
      pass = false;
      note = why;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

pyrgs::GaussianCloud random_cloud(std::size_t n, std::mt19937_64& gen, std::size_t channels = 1) {
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::normal_distribution<double> g(0.0, 1.0);
  pyrgs::GaussianCloud cloud;
  cloud.positions.resize(n);
  for (auto& p : cloud.positions)
    p = {static_cast<float>(u(gen)), static_cast<float>(u(gen)), static_cast<float>(u(gen))};
  static const char* kNames[] = {"opacity", "f_dc_0", "scale_0"};
  for (std::size_t c = 0; c < channels; ++c) {
    pyrgs::AttributeChannel ch;
    ch.name = kNames[c % 3];
    ch.values.resize(n);
    for (auto& v : ch.values) v = static_cast<float>(g(gen));
    cloud.channels.push_back(std::move(ch));
  }
  return cloud;
}

double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 60);
}

// ---- A1: pyramid partition and lossless reconstruction ----

Verdict check_pyramid_lossless() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const std::array<std::size_t, 4> sizes{0, 1, 1000, 100000};
  std::mt19937_64 gen(0xA1);
  std::uniform_real_distribution<double> rho(0.5, 6.0);

  for (int trial = 0; trial < 200 && v.pass; ++trial) {
    const std::size_t n = sizes[static_cast<std::size_t>(trial) % 4];
    const int levels = (trial / 4) % 8 + 1;
    const pyrgs::GaussianCloud cloud = random_cloud(n, gen);
    pyrgs::PyramidConfig cfg;
    cfg.base_resolution = rho(gen);
    cfg.num_levels = levels;
    const pyrgs::Pyramid pyr = pyrgs::build_pyramid(cloud, cfg);

    v.require(pyr.levels.size() == static_cast<std::size_t>(levels), "wrong level count");
    std::vector<std::uint8_t> seen(n, 0);
    std::size_t total = 0;
    for (const auto& lvl : pyr.levels) {
      v.require(std::is_sorted(lvl.begin(), lvl.end()), "level indices not ascending");
      for (std::uint32_t idx : lvl) {
        if (idx >= n || seen[idx]) {
          v.require(false, "levels are not a partition");
          break;
        }
        seen[idx] = 1;
        ++total;
      }
    }
    v.require(total == n, "levels drop points");
    v.require(pyrgs::bit_equal(pyrgs::reconstruct(pyr), cloud), "reconstruction not bit-exact");
  }
  const double dt = seconds_since(t0);
  v.require(dt < 60.0, "exceeded the 60s budget (" + fmt_seconds(dt) + ")");
  if (v.pass) v.note = "200 clouds, " + fmt_seconds(dt);
  return v;
}

// ---- A2: density normalization and CDF quadrature agreement ----

Verdict check_ggd_quadrature() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(0xA2);
  for (double beta : {0.5, 1.0, 2.0, 4.0}) {
    for (double alpha : {0.1, 1.0, 10.0}) {
      const pyrgs::GgdParams p{0.25, alpha, beta};
      const double reach = alpha * std::pow(45.0, 1.0 / beta);
      auto f = [&](double x) { return pyrgs::pdf(x, p); };
      const double lo = p.mu - reach, hi = p.mu + reach;
      const double mass = integrate(f, lo, p.mu) + integrate(f, p.mu, hi);
      v.require(std::abs(mass - 1.0) <= 1e-6,
                "pdf mass off by " + std::to_string(std::abs(mass - 1.0)));

      std::uniform_real_distribution<double> xs(p.mu - 4.0 * alpha, p.mu + 4.0 * alpha);
      for (int k = 0; k < 100 && v.pass; ++k) {
        const double x = xs(gen);
        double want;
        if (x >= p.mu)
          want = 0.5 + integrate(f, p.mu, x);
        else
          want = 0.5 - integrate(f, x, p.mu);
        const double got = pyrgs::cdf(x, p);
        v.require(std::abs(got - want) <= 1e-8,
                  "cdf drifts from quadrature by " + std::to_string(std::abs(got - want)));
      }
      if (!v.pass) return v;
    }
  }
  const double dt = seconds_since(t0);
  v.require(dt < 30.0, "exceeded the 30s budget (" + fmt_seconds(dt) + ")");
  if (v.pass) v.note = "12 parameter sets, 100 points each, " + fmt_seconds(dt);
  return v;
}

// ---- A3: closed-form anchors ----

Verdict check_ggd_closed_forms() {
  Verdict v;
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::acos(-1.0));
  v.require(std::abs(pyrgs::pdf(0.0, {0.0, 1.0, 2.0}) - inv_sqrt_pi) <= 1e-9,
            "gaussian-shape peak is not 1/sqrt(pi)");
  v.require(std::abs(pyrgs::cdf(1.0, {0.0, 1.0, 1.0}) - (1.0 - 0.5 * std::exp(-1.0))) <= 1e-9,
            "laplace-shape cdf(1) is not 1 - exp(-1)/2");
  v.require(pyrgs::cdf(0.0, {0.0, 1.0, 2.0}) == 0.5, "cdf at the location must be exactly one half");
  v.require(std::abs(pyrgs::cdf(1.0, {0.0, 1.0, 2.0}) - 0.5 * (1.0 + std::erf(1.0))) <= 1e-9,
            "gaussian-shape cdf(1) disagrees with erf");
  v.require(std::abs(pyrgs::pdf(1.0, {0.0, 1.0, 1.0}) - 0.5 * std::exp(-1.0)) <= 1e-9,
            "laplace-shape pdf(1) disagrees with exp(-1)/2");
  if (v.pass) v.note = "five anchors at 1e-9";
  return v;
}

// ---- A4: range coder exactness and rate accuracy ----

Verdict check_range_coder() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(0xA4);
  std::uniform_int_distribution<std::uint32_t> u32;

  std::size_t total_symbols = 0;
  for (int config = 0; config < 50 && v.pass; ++config) {
    const std::size_t alphabet = std::min<std::size_t>(
        1 + static_cast<std::size_t>(std::pow(2.0, (config % 16))), 65536);
    std::vector<std::uint64_t> counts(alphabet);
    std::uniform_int_distribution<std::uint64_t> c(0, 1000);
    for (auto& x : counts) x = c(gen);
    if (config % 5 == 0) counts[alphabet / 2] += 1000000;  // sharp peak
    const std::int32_t s_min = -static_cast<std::int32_t>(alphabet / 2);
    const pyrgs::FrequencyTable table = pyrgs::FrequencyTable::from_counts(counts, s_min);

    const std::size_t len = 20000;
    total_symbols += len;
    std::vector<std::int32_t> symbols(len);
    for (auto& s : symbols)
      s = table.symbol_from_scaled(u32(gen) & 0xFFFFu);

    const auto stream = pyrgs::encode_channel(symbols, table);
    const auto back = pyrgs::decode_channel(stream, symbols.size(), table);
    v.require(back == symbols, "round-trip is not exact");

    double ideal = 0.0;
    for (std::int32_t s : symbols)
      ideal -= std::log2(static_cast<double>(table.freq_of(s)) / 65536.0);
    const double actual = 8.0 * static_cast<double>(stream.size());
    v.require(actual <= ideal * 1.01 + 128.0,
              "stream is " + std::to_string(actual - ideal) + " bits over the ideal");
    v.require(actual + 1e-6 >= ideal, "stream undercuts the entropy bound");
  }
  const double dt = seconds_since(t0);
  v.require(total_symbols == 1000000, "wrong symbol volume");
  v.require(dt < 120.0, "exceeded the 120s budget (" + fmt_seconds(dt) + ")");
  if (v.pass) v.note = "50 configs, 1000000 symbols, " + fmt_seconds(dt);
  return v;
}

// ---- A5: container distortion bound and structure preservation ----

Verdict check_container_bound() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(0xA5);
  std::uniform_int_distribution<int> levels(1, 6);
  std::uniform_int_distribution<std::size_t> size(1, 20000);
  std::uniform_real_distribution<double> rho(1.0, 6.0);

  for (int trial = 0; trial < 20 && v.pass; ++trial) {
    const pyrgs::GaussianCloud cloud = random_cloud(size(gen), gen, 2);
    pyrgs::PyramidConfig cfg;
    cfg.base_resolution = rho(gen);
    cfg.num_levels = levels(gen);
    const pyrgs::Pyramid pyr = pyrgs::build_pyramid(cloud, cfg);
    const auto bytes = pyrgs::compress(pyr);

    const pyrgs::DecodedContainer dec = pyrgs::decode_container(bytes);
    v.require(dec.pyramid.levels.size() == pyr.levels.size(), "level count changed");
    for (std::size_t l = 0; l < pyr.levels.size() && v.pass; ++l) {
      v.require(dec.pyramid.levels[l].size() == pyr.levels[l].size(), "level population changed");
      const double res = pyrgs::level_resolution(cfg.base_resolution, static_cast<int>(l));
      for (std::size_t k = 0; k < pyr.levels[l].size(); ++k) {
        const auto key =
            pyrgs::voxel_key(cloud.positions[pyr.levels[l][k]], res, *pyr.config.bbox_origin);
        if (!(key == dec.keys[l][k])) {
          v.require(false, "voxel keys changed");
          break;
        }
      }
    }

    const pyrgs::StatsReport rep = pyrgs::stats(bytes, cloud);
    for (const auto& ch : rep.channels)
      v.require(ch.max_error <= 0.5 * ch.q,
                "channel " + ch.name + " exceeds half a step: " + std::to_string(ch.max_error) +
                    " > " + std::to_string(0.5 * ch.q));
  }
  const double dt = seconds_since(t0);
  if (v.pass) v.note = "20 clouds, every channel within q/2, " + fmt_seconds(dt);
  return v;
}

// ---- A6: depth compensation identities and visibility accounting ----

Verdict check_perception_identities() {
  Verdict v;
  pyrgs::PerceptionParams params;  // thresh 50, alpha 0.7

  v.require(pyrgs::depth_factor(100.0, params) == 1.7,
            "f(100) with threshold 50 and strength 0.7 must equal 1.7 exactly");

  for (int i = 0; i <= 1000 && v.pass; ++i) {
    const double sigma = 50.0 * static_cast<double>(i) / 1000.0;
    v.require(pyrgs::depth_factor(sigma, params) == 1.0,
              "compensation must be exactly 1 below the threshold");
  }

  std::mt19937_64 gen(0xA6);
  std::uniform_real_distribution<double> dist(0.25, 500.0);
  std::uniform_real_distribution<double> fd(1.0, 4.0);
  pyrgs::Camera origin_cam;
  origin_cam.cx = origin_cam.cy = 0.5;
  pyrgs::PerceptionParams lp;
  lp.d_std = 64.0;
  for (int trial = 0; trial < 1000 && v.pass; ++trial) {
    const double d = dist(gen);
    const double f = fd(gen);
    const auto far = pyrgs::pyramid_level({0.0, 0.0, d}, origin_cam, f, lp, 40);
    const auto near = pyrgs::pyramid_level({0.0, 0.0, d / 2.0}, origin_cam, f, lp, 40);
    v.require(std::abs(near.l_real - (far.l_real + 1.0)) <= 1e-12,
              "halving the distance must raise the real level by exactly 1");
  }

  // 50 anchors, 10 cameras: per-anchor and per-camera visibility tallies agree
  std::uniform_real_distribution<double> pos(-8.0, 8.0);
  pyrgs::GaussianCloud cloud;
  cloud.positions.resize(50);
  for (auto& p : cloud.positions)
    p = {static_cast<float>(pos(gen)), static_cast<float>(pos(gen)), static_cast<float>(pos(gen))};
  pyrgs::PyramidConfig cfg;
  cfg.base_resolution = 4.0;
  cfg.num_levels = 4;
  const pyrgs::Pyramid pyr = pyrgs::build_pyramid(cloud, cfg);

  std::vector<pyrgs::Camera> cams(10);
  for (int j = 0; j < 10; ++j) {
    pyrgs::Camera& cam = cams[static_cast<std::size_t>(j)];
    const double angle = 2.0 * std::acos(-1.0) * j / 10.0;
    const double cs = std::cos(angle), sn = std::sin(angle);
    cam.center = {-30.0 * sn, 0.0, -30.0 * cs};
    // rotate about y so the camera looks back at the origin
    cam.rotation = {cs, 0.0, -sn, 0.0, 1.0, 0.0, sn, 0.0, cs};
    cam.fx = cam.fy = 0.7;
    cam.cx = cam.cy = 1.0;
    cam.width = cam.height = 2;
    pyrgs::validate_camera(cam);
  }
  pyrgs::PerceptionParams sp;
  sp.d_std = 45.0;
  for (int level : {0, 1, 3}) {
    const pyrgs::PerceptionReport rep = pyrgs::perceive(pyr, cams, level, sp);
    std::uint64_t by_camera = 0;
    for (std::uint64_t c : rep.visible_counts) by_camera += c;
    std::uint64_t by_anchor = 0;
    for (double c : rep.coverage) {
      const double n_vis = c * static_cast<double>(cams.size()) / sp.beta_coverage;
      by_anchor += static_cast<std::uint64_t>(std::llround(n_vis));
    }
    v.require(by_anchor == by_camera,
              "per-anchor and per-camera visibility totals disagree at level " +
                  std::to_string(level));
  }
  if (v.pass) v.note = "exact compensation anchors, 1000 halving trials, tally identity";
  return v;
}

// ---- A7: monotone rate-distortion tradeoff under step scaling ----

Verdict check_rate_distortion_monotone() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(0xA7);
  const pyrgs::GaussianCloud cloud = random_cloud(100000, gen, 2);
  pyrgs::PyramidConfig cfg;
  cfg.base_resolution = 2.5;
  cfg.num_levels = 5;
  const pyrgs::Pyramid pyr = pyrgs::build_pyramid(cloud, cfg);

  std::uint64_t prev_bytes = 0;
  double prev_mse = -1.0;
  std::string sweep;
  for (double scale : {1.0, 2.0, 4.0, 8.0}) {
    pyrgs::QuantSpec spec;
    spec.q_scale = scale;
    const auto bytes = pyrgs::compress(pyr, spec);
    const pyrgs::StatsReport rep = pyrgs::stats(bytes, cloud);
    if (prev_bytes != 0) {
      v.require(bytes.size() < prev_bytes, "container size failed to shrink at scale " +
                                               std::to_string(scale));
      v.require(rep.total_mse > prev_mse,
                "distortion failed to grow at scale " + std::to_string(scale));
    }
    prev_bytes = bytes.size();
    prev_mse = rep.total_mse;
    if (!sweep.empty()) sweep += " > ";
    sweep += std::to_string(bytes.size());
  }
  const double dt = seconds_since(t0);
  v.require(dt < 60.0, "exceeded the 60s budget (" + fmt_seconds(dt) + ")");
  if (v.pass) v.note = "bytes " + sweep + ", " + fmt_seconds(dt);
  return v;
}

// ---- A8: byte-identical CLI runs under a fixed seed ----

int run_cli(const std::string& cli, const std::string& dir, const std::string& args,
            const std::string& stdout_name) {
  const std::string cmd = "cd '" + dir + "' && '" + cli + "' " + args + " > " + stdout_name +
                          " 2> " + stdout_name + ".err";
  return std::system(cmd.c_str());
}

Verdict check_cli_determinism() {
  Verdict v;
  const char* cli_env = std::getenv("PYRGS_CLI");
  if (cli_env == nullptr) {
    v.require(false, "PYRGS_CLI is not set");
    return v;
  }
  const std::string cli = cli_env;

  char tmpl[] = "/tmp/pyrgs_accept_XXXXXX";
  char* base_c = mkdtemp(tmpl);
  if (base_c == nullptr) {
    v.require(false, "mkdtemp failed");
    return v;
  }
  const std::string base = base_c;

  std::mt19937_64 gen(0xA8);
  const pyrgs::GaussianCloud cloud = random_cloud(2000, gen, 2);
  pyrgs::write_ply(cloud, base + "/cloud.ply");
  pyrgs::Camera cam;
  cam.center = {0.0, 0.0, -40.0};
  cam.cx = cam.cy = 0.5;
  const nlohmann::json cams = nlohmann::json::array(
      {{{"id", 0},
        {"center", {cam.center.x, cam.center.y, cam.center.z}},
        {"rotation", cam.rotation},
        {"fx", cam.fx},
        {"fy", cam.fy},
        {"cx", cam.cx},
        {"cy", cam.cy},
        {"width", cam.width},
        {"height", cam.height}}});
  pyrgs::write_file_atomic(base + "/cams.json", cams.dump());

  for (int round = 0; round < 2; ++round) {
    const std::string dir = base + "/run" + std::to_string(round);
    std::filesystem::create_directories(dir);
    int rc = 0;
    rc |= run_cli(cli, dir,
                  "build -i ../cloud.ply --levels auto --seed 5 -o manifest.json "
                  "--export-levels lv",
                  "build_out.json");
    rc |= run_cli(cli, dir,
                  "perceive -i ../cloud.ply --cameras ../cams.json --levels 3 --level 1 "
                  "--d-std 50 -o report.json --level-csv matrix.csv",
                  "perceive_out.json");
    rc |= run_cli(cli, dir, "compress -i ../cloud.ply -o c.bin --levels 3", "compress_out.json");
    rc |= run_cli(cli, dir, "decompress -i c.bin -o out.ply", "decompress_out.json");
    rc |= run_cli(cli, dir, "stats -i c.bin --original ../cloud.ply -o stats.json",
                  "stats_out.json");
    if (rc != 0) {
      v.require(false, "a CLI invocation failed in round " + std::to_string(round));
      return v;
    }
  }

  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(base + "/run0"))
    names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  v.require(!names.empty(), "first run produced no files");
  std::size_t compared = 0;
  for (const std::string& name : names) {
    const std::string other = base + "/run1/" + name;
    if (!std::filesystem::exists(other)) {
      v.require(false, "second run is missing " + name);
      break;
    }
    const auto a = pyrgs::read_file(base + "/run0/" + name);
    const auto b = pyrgs::read_file(other);
    if (a != b) {
      v.require(false, name + " differs between runs");
      break;
    }
    ++compared;
  }
  if (v.pass)
    v.note = std::to_string(compared) + " artifacts byte-identical across two runs";
  return v;
}

}  // namespace

int main() {
  struct Entry {
    const char* id;
    const char* title;
    Verdict (*fn)();
  };
  const Entry entries[] = {
      {"A1", "pyramid partition and lossless reconstruction", check_pyramid_lossless},
      {"A2", "density normalization and CDF quadrature agreement", check_ggd_quadrature},
      {"A3", "closed-form density and CDF anchors", check_ggd_closed_forms},
      {"A4", "range coder exactness and rate accuracy", check_range_coder},
      {"A5", "container distortion bound and structure preservation", check_container_bound},
      {"A6", "depth compensation identities and visibility accounting", check_perception_identities},
      {"A7", "monotone rate-distortion tradeoff under step scaling", check_rate_distortion_monotone},
      {"A8", "byte-identical CLI runs under a fixed seed", check_cli_determinism},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    Verdict v;
    try {
      v = e.fn();
    } catch (const std::exception& ex) {
      v.pass = false;
      v.note = std::string("unhandled exception: ") + ex.what();
    }
    if (!v.pass) ++failures;
    std::printf("[%s] %s — %s%s%s\n", v.pass ? "PASS" : "FAIL", e.id, e.title,
                v.note.empty() ? "" : ": ", v.note.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
