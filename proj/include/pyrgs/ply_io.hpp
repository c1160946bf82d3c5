#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "pyrgs/cloud.hpp"
#include "pyrgs/core.hpp"
#include "pyrgs/io_util.hpp"

namespace pyrgs {

namespace detail {

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

struct PlyHeader {
  bool binary = false;
  std::uint64_t vertex_count = 0;
  std::vector<std::string> properties;
  std::size_t payload_offset = 0;
};

inline PlyHeader parse_ply_header(std::span<const std::uint8_t> data) {
  std::string_view text(reinterpret_cast<const char*>(data.data()), data.size());
  PlyHeader h;
  bool have_format = false, have_vertex = false, done = false;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::unordered_set<std::string_view> seen_props;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos)
      throw Error(Errc::malformed_header, "header not terminated by end_header");
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != "ply") throw Error(Errc::malformed_header, "missing 'ply' magic line");
      continue;
    }
    auto tok = split_tokens(line);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3 || tok[2] != "1.0")
        throw Error(Errc::malformed_header, "unsupported format line");
      if (tok[1] == "ascii") h.binary = false;
      else if (tok[1] == "binary_little_endian") h.binary = true;
      else throw Error(Errc::malformed_header, "unsupported encoding '" + std::string(tok[1]) + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw Error(Errc::malformed_header, "malformed element line");
      if (tok[1] != "vertex" || have_vertex)
        throw Error(Errc::malformed_header, "only a single 'vertex' element is supported");
      std::uint64_t n = 0;
      auto [p, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), n);
      if (ec != std::errc() || p != tok[2].data() + tok[2].size())
        throw Error(Errc::malformed_header, "bad vertex count");
      if (n >= (1ull << 32)) throw Error(Errc::malformed_header, "vertex count too large");
      h.vertex_count = n;
      have_vertex = true;
    } else if (tok[0] == "property") {
      if (!have_vertex) throw Error(Errc::malformed_header, "property before element");
      if (tok.size() != 3 || tok[1] == "list")
        throw Error(Errc::non_float_property, "only scalar float properties are supported");
      if (tok[1] != "float" && tok[1] != "float32")
        throw Error(Errc::non_float_property,
                    "property '" + std::string(tok[2]) + "' has non-float type '" + std::string(tok[1]) + "'");
      if (!seen_props.insert(tok[2]).second)
        throw Error(Errc::malformed_header, "duplicate property '" + std::string(tok[2]) + "'");
      h.properties.emplace_back(tok[2]);
    } else if (tok[0] == "end_header") {
      done = true;
      break;
    } else {
      throw Error(Errc::malformed_header, "unrecognized header line '" + std::string(tok[0]) + "'");
    }
  }
  if (!done) throw Error(Errc::malformed_header, "header not terminated by end_header");
  if (!have_format) throw Error(Errc::malformed_header, "missing format line");
  if (!have_vertex) throw Error(Errc::malformed_header, "missing vertex element");
  h.payload_offset = pos;
  return h;
}

inline std::vector<float> parse_ascii_payload(std::string_view body, std::uint64_t count,
                                              std::size_t props) {
  std::vector<float> out;
  out.reserve(count * props);
  std::size_t i = 0;
  const std::uint64_t need = count * props;
  while (out.size() < need) {
    while (i < body.size() && (body[i] == ' ' || body[i] == '\t' || body[i] == '\n' || body[i] == '\r')) ++i;
    if (i >= body.size()) throw Error(Errc::malformed_payload, "too few vertex values");
    std::size_t start = i;
    while (i < body.size() && body[i] != ' ' && body[i] != '\t' && body[i] != '\n' && body[i] != '\r') ++i;
    float v = 0.0f;
    auto [p, ec] = std::from_chars(body.data() + start, body.data() + i, v);
    if (ec != std::errc() || p != body.data() + i)
      throw Error(Errc::malformed_payload,
                  "bad numeric token '" + std::string(body.substr(start, i - start)) + "'");
    out.push_back(v);
  }
  while (i < body.size()) {
    if (body[i] != ' ' && body[i] != '\t' && body[i] != '\n' && body[i] != '\r')
      throw Error(Errc::malformed_payload, "trailing data after vertex list");
    ++i;
  }
  return out;
}

}  // namespace detail

// Sidecar schema: a flat JSON object mapping channel name to HIGH_FREQ or
// SMOOTH. Position properties x/y/z are not overridable; their coded offsets
// are always treated as high-frequency.
inline void apply_schema(GaussianCloud& cloud, const std::string& schema_text) {
  nlohmann::json j = nlohmann::json::parse(schema_text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(Errc::malformed_json, "schema must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& name = it.key();
    if (!it.value().is_string())
      throw Error(Errc::invalid_config, "schema entry '" + name + "' must be a string");
    FreqClass f = freq_class_from_name(it.value().get<std::string>());
    if (name == "x" || name == "y" || name == "z")
      throw Error(Errc::invalid_config, "schema may not retag position property '" + name + "'");
    bool found = false;
    for (auto& ch : cloud.channels) {
      if (ch.name == name) {
        ch.freq = f;
        found = true;
        break;
      }
    }
    if (!found) throw Error(Errc::invalid_config, "schema names unknown channel '" + name + "'");
  }
}

inline GaussianCloud parse_ply(std::span<const std::uint8_t> data) {
  detail::PlyHeader h = detail::parse_ply_header(data);
  auto it_of = [&](const char* name) {
    for (std::size_t i = 0; i < h.properties.size(); ++i)
      if (h.properties[i] == name) return static_cast<std::ptrdiff_t>(i);
    return static_cast<std::ptrdiff_t>(-1);
  };
  const std::ptrdiff_t px = it_of("x"), py = it_of("y"), pz = it_of("z");
  if (px < 0 || py < 0 || pz < 0)
    throw Error(Errc::malformed_header, "vertex element must carry x, y, z properties");

  const std::size_t props = h.properties.size();
  std::vector<float> flat;
  if (h.binary) {
    const std::size_t need = static_cast<std::size_t>(h.vertex_count) * props * 4;
    const std::size_t have = data.size() - h.payload_offset;
    if (have < need) throw Error(Errc::malformed_payload, "binary payload truncated");
    if (have > need) throw Error(Errc::malformed_payload, "trailing bytes after vertex data");
    flat.resize(static_cast<std::size_t>(h.vertex_count) * props);
    if (need > 0) std::memcpy(flat.data(), data.data() + h.payload_offset, need);
  } else {
    std::string_view body(reinterpret_cast<const char*>(data.data()) + h.payload_offset,
                          data.size() - h.payload_offset);
    flat = detail::parse_ascii_payload(body, h.vertex_count, props);
  }

  GaussianCloud cloud;
  const std::size_t n = static_cast<std::size_t>(h.vertex_count);
  cloud.positions.resize(n);
  for (std::size_t i = 0; i < props; ++i) {
    if (static_cast<std::ptrdiff_t>(i) == px || static_cast<std::ptrdiff_t>(i) == py ||
        static_cast<std::ptrdiff_t>(i) == pz)
      continue;
    AttributeChannel ch;
    ch.name = h.properties[i];
    ch.freq = FreqClass::kSmooth;
    ch.values.resize(n);
    cloud.channels.push_back(std::move(ch));
  }
  std::size_t ci = 0;
  std::vector<std::ptrdiff_t> prop_to_channel(props, -1);
  for (std::size_t i = 0; i < props; ++i) {
    if (static_cast<std::ptrdiff_t>(i) == px || static_cast<std::ptrdiff_t>(i) == py ||
        static_cast<std::ptrdiff_t>(i) == pz)
      continue;
    prop_to_channel[i] = static_cast<std::ptrdiff_t>(ci++);
  }
  for (std::size_t v = 0; v < n; ++v) {
    const float* row = flat.data() + v * props;
    cloud.positions[v] = {row[px], row[py], row[pz]};
    for (std::size_t i = 0; i < props; ++i)
      if (prop_to_channel[i] >= 0) cloud.channels[static_cast<std::size_t>(prop_to_channel[i])].values[v] = row[i];
    for (std::size_t i = 0; i < props; ++i)
      if (!std::isfinite(row[i]))
        throw Error(Errc::non_finite_value,
                    "non-finite value in property '" + h.properties[i] + "' at vertex " + std::to_string(v));
  }
  return cloud;
}

// schema_path: explicit sidecar file, or "" to probe <path>.schema.json.
inline GaussianCloud read_ply(const std::string& path, const std::string& schema_path = "") {
  GaussianCloud cloud = parse_ply(read_file(path));
  std::string sp = schema_path;
  if (sp.empty()) {
    std::error_code ec;
    const std::string probe = path + ".schema.json";
    if (std::filesystem::exists(probe, ec)) sp = probe;
  }
  if (!sp.empty()) {
    auto bytes = read_file(sp);
    apply_schema(cloud, std::string(bytes.begin(), bytes.end()));
  }
  return cloud;
}

inline std::vector<std::uint8_t> serialize_ply(const GaussianCloud& cloud) {
  validate_cloud(cloud);
  for (const auto& ch : cloud.channels) {
    if (ch.name.empty() || ch.name.find_first_of(" \t\r\n") != std::string::npos ||
        ch.name == "x" || ch.name == "y" || ch.name == "z")
      throw Error(Errc::invalid_cloud, "channel name '" + ch.name + "' is not a valid PLY property name");
  }
  ByteWriter w;
  w.text("ply\nformat binary_little_endian 1.0\n");
  w.text("element vertex " + std::to_string(cloud.size()) + "\n");
  w.text("property float x\nproperty float y\nproperty float z\n");
  for (const auto& ch : cloud.channels) w.text("property float " + ch.name + "\n");
  w.text("end_header\n");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    w.f32(cloud.positions[i].x);
    w.f32(cloud.positions[i].y);
    w.f32(cloud.positions[i].z);
    for (const auto& ch : cloud.channels) w.f32(ch.values[i]);
  }
  return w.take();
}

inline void write_ply(const GaussianCloud& cloud, const std::string& path) {
  write_file_atomic(path, serialize_ply(cloud));
}

}  // namespace pyrgs
