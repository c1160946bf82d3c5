#include <charconv>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pyrgs/pyrgs.hpp"

namespace {

int exit_code_for(pyrgs::Errc c) {
  switch (c) {
    case pyrgs::Errc::missing_file:
    case pyrgs::Errc::io_error:
    case pyrgs::Errc::malformed_header:
    case pyrgs::Errc::malformed_payload:
    case pyrgs::Errc::non_float_property:
    case pyrgs::Errc::non_finite_value:
    case pyrgs::Errc::invalid_cloud:
      return 2;
    case pyrgs::Errc::malformed_json:
    case pyrgs::Errc::missing_field:
    case pyrgs::Errc::non_orthonormal_rotation:
    case pyrgs::Errc::invalid_camera:
    case pyrgs::Errc::invalid_config:
    case pyrgs::Errc::invalid_argument:
    case pyrgs::Errc::empty_input:
    case pyrgs::Errc::out_of_range:
      return 3;
    default:
      return 4;  // codec and container errors
  }
}

void print_error(const pyrgs::Error& e) {
  nlohmann::json j{{"code", pyrgs::errc_name(e.code())}, {"message", e.what()}};
  if (e.level() >= 0) j["level"] = e.level();
  if (!e.channel().empty()) j["channel"] = e.channel();
  std::cerr << j.dump() << "\n";
}

void emit(const std::string& output, const nlohmann::json& j) {
  std::string text = j.dump(2);
  text.push_back('\n');
  if (output.empty())
    std::cout << text;
  else
    pyrgs::write_file_atomic(output, text);
}

int parse_levels(const std::string& s) {
  if (s == "auto") return pyrgs::kAutoLevels;
  int value = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || p != s.data() + s.size() || value < 1 || value > pyrgs::kMaxLevels)
    throw pyrgs::Error(pyrgs::Errc::invalid_argument,
                       "--levels expects 'auto' or an integer in [1, " + std::to_string(pyrgs::kMaxLevels) + "]");
  return value;
}

std::map<std::string, double> parse_q(const std::string& s) {
  std::map<std::string, double> steps;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    const std::string_view item(s.data() + pos, comma - pos);
    if (!item.empty()) {
      const std::size_t eq = item.find('=');
      if (eq == std::string_view::npos || eq == 0 || eq + 1 == item.size())
        throw pyrgs::Error(pyrgs::Errc::invalid_argument, "--q expects channel=step[,channel=step...]");
      const std::string name(item.substr(0, eq));
      double value = 0.0;
      const char* first = item.data() + eq + 1;
      const char* last = item.data() + item.size();
      const auto [p, ec] = std::from_chars(first, last, value);
      if (ec != std::errc{} || p != last || !(value > 0.0) || !std::isfinite(value))
        throw pyrgs::Error(pyrgs::Errc::invalid_argument, "--q step for '" + name + "' must be a positive number");
      if (!steps.emplace(name, value).second)
        throw pyrgs::Error(pyrgs::Errc::invalid_argument, "--q names channel '" + name + "' twice");
    }
    if (comma == s.size()) break;
    pos = comma + 1;
  }
  return steps;
}

double resolve_base_resolution(double flag, const pyrgs::GaussianCloud& cloud) {
  if (flag > 0.0) return flag;
  const double diag = cloud.size() == 0 ? 0.0 : pyrgs::bbox_diagonal(cloud);
  return diag > 0.0 ? diag / 16.0 : 1.0;
}

double resolve_d_std(double flag, const pyrgs::GaussianCloud& cloud) {
  if (flag > 0.0) return flag;
  const double diag = cloud.size() == 0 ? 0.0 : pyrgs::bbox_diagonal(cloud);
  return diag > 0.0 ? diag : 1.0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-level voxel pyramid codec for Gaussian point clouds"};
  app.require_subcommand(1);

  std::string input, output, schema, cameras_path, original_path, levels_str = "auto";
  std::string q_spec, level_csv, export_prefix;
  double base_resolution = 0.0;  // 0 resolves to bbox diagonal / 16
  double d_std = 0.0;            // 0 resolves to bbox diagonal
  double sigma_thresh = 50.0, alpha_depth = 0.7, beta_coverage = 0.5;
  double q_scale = 1.0, lambda = 0.0005;
  int level = -1;  // -1 resolves to the finest level
  std::uint64_t seed = 0;

  auto add_cloud_flags = [&](CLI::App* cmd) {
    cmd->add_option("-i,--input", input, "input PLY file")->required();
    cmd->add_option("--schema", schema, "JSON file tagging channels SMOOTH or HIGH_FREQ");
    cmd->add_option("--levels", levels_str, "pyramid depth, integer or 'auto'");
    cmd->add_option("--base-resolution", base_resolution, "coarsest voxel edge (default: bbox diagonal / 16)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "sampling seed for automatic depth");
  };

  CLI::App* build = app.add_subcommand("build", "build a voxel pyramid and report its level structure");
  add_cloud_flags(build);
  build->add_option("-o,--output", output, "write the manifest JSON here instead of stdout");
  build->add_option("--export-levels", export_prefix, "write cumulative LOD clouds to <prefix>_lod<k>.ply");

  CLI::App* perceive = app.add_subcommand("perceive", "score pyramid levels against a camera set");
  add_cloud_flags(perceive);
  perceive->add_option("--cameras", cameras_path, "camera set JSON")->required();
  perceive->add_option("--level", level, "current pyramid level (default: finest)");
  perceive->add_option("--sigma-thresh", sigma_thresh, "depth spread threshold");
  perceive->add_option("--alpha-depth", alpha_depth, "depth compensation strength");
  perceive->add_option("--beta-coverage", beta_coverage, "coverage weight");
  perceive->add_option("--d-std", d_std, "reference distance (default: bbox diagonal)")->check(CLI::PositiveNumber);
  perceive->add_option("-o,--output", output, "write the report JSON here instead of stdout");
  perceive->add_option("--level-csv", level_csv, "write the full anchor/camera level matrix as CSV");

  CLI::App* compress = app.add_subcommand("compress", "encode a cloud into a pyramid container");
  add_cloud_flags(compress);
  compress->add_option("-o,--output", output, "output container file")->required();
  compress->add_option("--q", q_spec, "per-channel quantization steps, channel=step[,channel=step...]");
  compress->add_option("--q-scale", q_scale, "multiplier applied to every step")->check(CLI::PositiveNumber);
  compress->add_option("--lambda", lambda, "rate weight stored in the container")->check(CLI::NonNegativeNumber);

  CLI::App* decompress = app.add_subcommand("decompress", "decode a container back to a PLY cloud");
  decompress->add_option("-i,--input", input, "input container file")->required();
  decompress->add_option("-o,--output", output, "output PLY file")->required();

  CLI::App* stats = app.add_subcommand("stats", "rate and distortion report for a container");
  stats->add_option("-i,--input", input, "input container file")->required();
  stats->add_option("--original", original_path, "original PLY the container was built from")->required();
  stats->add_option("--schema", schema, "JSON schema for the original cloud");
  stats->add_option("-o,--output", output, "write the stats JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"code", "invalid_argument"}, {"message", e.what()}}.dump() << "\n";
    return 3;
  }

  try {
    if (build->parsed()) {
      const pyrgs::GaussianCloud cloud = pyrgs::read_ply(input, schema);
      pyrgs::PyramidConfig cfg;
      cfg.base_resolution = resolve_base_resolution(base_resolution, cloud);
      cfg.num_levels = parse_levels(levels_str);
      cfg.seed = seed;
      const pyrgs::Pyramid pyr = pyrgs::build_pyramid(cloud, cfg);
      emit(output, pyrgs::pyramid_manifest(pyr));
      if (!export_prefix.empty())
        for (int l = 0; l < pyr.config.num_levels; ++l) {
          const auto indices = pyrgs::cumulative_set(pyr, l);
          pyrgs::write_ply(pyrgs::subset(pyr.source, indices),
                           export_prefix + "_lod" + std::to_string(l) + ".ply");
        }
    } else if (perceive->parsed()) {
      const pyrgs::GaussianCloud cloud = pyrgs::read_ply(input, schema);
      const std::vector<pyrgs::Camera> cameras = pyrgs::read_cameras(cameras_path);
      pyrgs::PyramidConfig cfg;
      cfg.base_resolution = resolve_base_resolution(base_resolution, cloud);
      cfg.num_levels = parse_levels(levels_str);
      cfg.seed = seed;
      const pyrgs::Pyramid pyr = pyrgs::build_pyramid(cloud, cfg);
      pyrgs::PerceptionParams params;
      params.sigma_z_thresh = sigma_thresh;
      params.alpha_depth = alpha_depth;
      params.beta_coverage = beta_coverage;
      params.d_std = resolve_d_std(d_std, cloud);
      const int current = level >= 0 ? level : pyr.config.num_levels - 1;
      const pyrgs::PerceptionReport rep = pyrgs::perceive(pyr, cameras, current, params);
      emit(output, pyrgs::report_json(rep));
      if (!level_csv.empty()) {
        std::string csv = "anchor,camera,level\n";
        for (const auto& e : rep.level_matrix)
          csv += std::to_string(e.anchor) + "," + std::to_string(e.camera) + "," + std::to_string(e.level) + "\n";
        pyrgs::write_file_atomic(level_csv, csv);
      }
    } else if (compress->parsed()) {
      const pyrgs::GaussianCloud cloud = pyrgs::read_ply(input, schema);
      pyrgs::PyramidConfig cfg;
      cfg.base_resolution = resolve_base_resolution(base_resolution, cloud);
      cfg.num_levels = parse_levels(levels_str);
      cfg.seed = seed;
      const pyrgs::Pyramid pyr = pyrgs::build_pyramid(cloud, cfg);
      pyrgs::QuantSpec qs;
      qs.channel_q = parse_q(q_spec);
      qs.q_scale = q_scale;
      qs.lambda = lambda;
      const std::vector<std::uint8_t> bytes = pyrgs::compress(pyr, qs);
      pyrgs::write_file_atomic(output, bytes);
      nlohmann::json counts = nlohmann::json::array();
      for (const auto& lvl : pyr.levels) counts.push_back(lvl.size());
      emit("", nlohmann::json{{"container_bytes", bytes.size()},
                              {"num_levels", pyr.config.num_levels},
                              {"level_counts", counts}});
    } else if (decompress->parsed()) {
      const std::vector<std::uint8_t> bytes = pyrgs::read_file(input);
      const pyrgs::Pyramid pyr = pyrgs::decompress(bytes);
      pyrgs::write_ply(pyr.source, output);
      nlohmann::json counts = nlohmann::json::array();
      for (const auto& lvl : pyr.levels) counts.push_back(lvl.size());
      emit("", nlohmann::json{{"points", pyr.source.size()},
                              {"num_levels", pyr.config.num_levels},
                              {"level_counts", counts}});
    } else if (stats->parsed()) {
      const std::vector<std::uint8_t> bytes = pyrgs::read_file(input);
      const pyrgs::GaussianCloud original = pyrgs::read_ply(original_path, schema);
      emit(output, pyrgs::stats_json(pyrgs::stats(bytes, original)));
    }
  } catch (const pyrgs::Error& e) {
    print_error(e);
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"code", "internal_error"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
