#pragma once

// Small helpers for strict JSON decoding with path-qualified errors.

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "aqua/error.hpp"
#include "aqua/geometry.hpp"

namespace aqua {

using Json = nlohmann::json;

/// Schema violation; the message starts with the JSON pointer of the offending value.
class SchemaError : public InvalidArgument {
 public:
  SchemaError(const std::string& path, const std::string& what)
      : InvalidArgument(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

namespace json_util {

inline std::string child(const std::string& path, std::string_view key) {
  return path + "/" + std::string(key);
}
inline std::string child(const std::string& path, std::size_t index) {
  return path + "/" + std::to_string(index);
}

inline void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path.empty() ? "/" : path, "expected an object");
}

inline void check_keys(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  require_object(j, path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw SchemaError(child(path, it.key()), "unknown field");
  }
}

inline const Json& at(const Json& j, const std::string& path, std::string_view key) {
  require_object(j, path);
  auto it = j.find(std::string(key));
  if (it == j.end()) throw SchemaError(child(path, key), "missing required field");
  return *it;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  return j.get<double>();
}

inline double number(const Json& obj, const std::string& path, std::string_view key) {
  return number(at(obj, path, key), child(path, key));
}

inline double number_or(const Json& obj, const std::string& path, std::string_view key, double fallback) {
  if (!obj.contains(std::string(key))) return fallback;
  return number(obj, path, key);
}

inline long long integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw SchemaError(path, "expected an integer");
  return j.get<long long>();
}

inline long long integer_or(const Json& obj, const std::string& path, std::string_view key, long long fallback) {
  if (!obj.contains(std::string(key))) return fallback;
  return integer(obj.at(std::string(key)), child(path, key));
}

inline std::string string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

inline bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw SchemaError(path, "expected a boolean");
  return j.get<bool>();
}

inline Vec3 vec3(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw SchemaError(path, "expected an array of 3 numbers");
  Vec3 v;
  for (std::size_t i = 0; i < 3; ++i) v[static_cast<int>(i)] = number(j[i], child(path, i));
  return v;
}

inline Vec3 vec3(const Json& obj, const std::string& path, std::string_view key) {
  return vec3(at(obj, path, key), child(path, key));
}

inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

}  // namespace json_util

inline Json camera_to_json(const Camera& cam) {
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r) rot.push_back(Json::array({cam.rotation(r, 0), cam.rotation(r, 1), cam.rotation(r, 2)}));
  return Json{{"width", cam.width},
              {"height", cam.height},
              {"fx", cam.intrinsics.fx},
              {"fy", cam.intrinsics.fy},
              {"cx", cam.intrinsics.cx},
              {"cy", cam.intrinsics.cy},
              {"position", json_util::to_json(cam.position)},
              {"rotation", rot}};
}

inline Camera camera_from_json(const Json& j, const std::string& path = "") {
  using namespace json_util;
  check_keys(j, path, {"width", "height", "fx", "fy", "cx", "cy", "position", "rotation"});
  Camera cam;
  cam.width = static_cast<int>(integer(at(j, path, "width"), child(path, "width")));
  cam.height = static_cast<int>(integer(at(j, path, "height"), child(path, "height")));
  cam.intrinsics = {number(j, path, "fx"), number(j, path, "fy"), number(j, path, "cx"), number(j, path, "cy")};
  cam.position = vec3(j, path, "position");
  const Json& rot = at(j, path, "rotation");
  const std::string rp = child(path, "rotation");
  if (!rot.is_array() || rot.size() != 3) throw SchemaError(rp, "expected a 3x3 array");
  for (std::size_t r = 0; r < 3; ++r) cam.rotation.row(static_cast<int>(r)) = vec3(rot[r], child(rp, r)).transpose();
  try {
    cam.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(path.empty() ? "/" : path, e.what());
  }
  return cam;
}

}  // namespace aqua
