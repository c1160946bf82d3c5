#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pyrgs/cloud.hpp"
#include "pyrgs/core.hpp"
#include "pyrgs/io_util.hpp"

namespace pyrgs {

struct Camera {
  int id = 0;
  Vec3d center;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major, world to camera
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
};

inline void validate_camera(const Camera& cam) {
  for (double v : cam.rotation)
    if (!std::isfinite(v)) throw Error(Errc::invalid_camera, "non-finite rotation entry");
  if (!std::isfinite(cam.center.x) || !std::isfinite(cam.center.y) || !std::isfinite(cam.center.z))
    throw Error(Errc::invalid_camera, "non-finite camera center");
  if (!std::isfinite(cam.fx) || !std::isfinite(cam.fy) || !std::isfinite(cam.cx) || !std::isfinite(cam.cy))
    throw Error(Errc::invalid_camera, "non-finite intrinsics");
  if (cam.fx <= 0.0 || cam.fy <= 0.0)
    throw Error(Errc::invalid_camera, "focal length must be positive");
  if (cam.width < 1 || cam.height < 1)
    throw Error(Errc::invalid_camera, "image dimensions must be at least 1");
  // R^T R must equal the identity within 1e-6, entrywise.
  const auto& r = cam.rotation;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dotp = 0.0;
      for (int k = 0; k < 3; ++k) dotp += r[k * 3 + i] * r[k * 3 + j];
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(dotp - want) > 1e-6)
        throw Error(Errc::non_orthonormal_rotation,
                    "rotation is not orthonormal (R^T R deviates at entry " + std::to_string(i) + "," +
                        std::to_string(j) + ")");
    }
  }
}

// World point into camera coordinates.
inline Vec3d camera_transform(const Camera& cam, const Vec3d& p) {
  const Vec3d d = p - cam.center;
  const auto& r = cam.rotation;
  return {r[0] * d.x + r[1] * d.y + r[2] * d.z,
          r[3] * d.x + r[4] * d.y + r[5] * d.z,
          r[6] * d.x + r[7] * d.y + r[8] * d.z};
}

// A point is in the frustum when it projects in front of the camera and
// inside the image rectangle [0,width) x [0,height).
inline bool in_frustum(const Camera& cam, const Vec3d& p) {
  const Vec3d c = camera_transform(cam, p);
  if (!(c.z > 0.0)) return false;
  const double u = cam.fx * c.x / c.z + cam.cx;
  const double v = cam.fy * c.y / c.z + cam.cy;
  return u >= 0.0 && u < static_cast<double>(cam.width) && v >= 0.0 && v < static_cast<double>(cam.height);
}

inline bool in_frustum(const Camera& cam, const Vec3f& p) { return in_frustum(cam, to_double(p)); }

namespace detail {

inline double json_number(const nlohmann::json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw Error(Errc::missing_field, std::string("camera missing field '") + field + "'");
  if (!it->is_number()) throw Error(Errc::invalid_camera, std::string("camera field '") + field + "' must be a number");
  return it->get<double>();
}

}  // namespace detail

inline std::vector<Camera> parse_cameras(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::malformed_json, "camera file is not valid JSON");
  if (!j.is_array()) throw Error(Errc::malformed_json, "camera file must be a JSON array");
  std::vector<Camera> out;
  out.reserve(j.size());
  for (const auto& obj : j) {
    if (!obj.is_object()) throw Error(Errc::malformed_json, "camera entry must be a JSON object");
    Camera cam;
    cam.id = static_cast<int>(detail::json_number(obj, "id"));
    auto center = obj.find("center");
    if (center == obj.end()) throw Error(Errc::missing_field, "camera missing field 'center'");
    if (!center->is_array() || center->size() != 3)
      throw Error(Errc::invalid_camera, "camera 'center' must be a 3-element array");
    for (int i = 0; i < 3; ++i)
      if (!(*center)[static_cast<std::size_t>(i)].is_number())
        throw Error(Errc::invalid_camera, "camera 'center' entries must be numbers");
    cam.center = {(*center)[0].get<double>(), (*center)[1].get<double>(), (*center)[2].get<double>()};
    auto rot = obj.find("rotation");
    if (rot == obj.end()) throw Error(Errc::missing_field, "camera missing field 'rotation'");
    if (!rot->is_array() || rot->size() != 9)
      throw Error(Errc::invalid_camera, "camera 'rotation' must be a row-major 9-element array");
    for (int i = 0; i < 9; ++i) {
      const auto& e = (*rot)[static_cast<std::size_t>(i)];
      if (!e.is_number()) throw Error(Errc::invalid_camera, "camera 'rotation' entries must be numbers");
      cam.rotation[static_cast<std::size_t>(i)] = e.get<double>();
    }
    cam.fx = detail::json_number(obj, "fx");
    cam.fy = detail::json_number(obj, "fy");
    cam.cx = detail::json_number(obj, "cx");
    cam.cy = detail::json_number(obj, "cy");
    cam.width = static_cast<int>(detail::json_number(obj, "width"));
    cam.height = static_cast<int>(detail::json_number(obj, "height"));
    validate_camera(cam);
    out.push_back(cam);
  }
  return out;
}

inline std::vector<Camera> read_cameras(const std::string& path) {
  auto bytes = read_file(path);
  return parse_cameras(std::string(bytes.begin(), bytes.end()));
}

}  // namespace pyrgs
