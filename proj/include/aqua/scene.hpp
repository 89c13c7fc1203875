#pragma once

// Declarative synthetic underwater scenes and their analytic ground-truth
// renderer. Surfaces are Lambertian with constant albedo; the water is a
// homogeneous medium, so a surface at camera distance t is seen as
//   exp(-sigma_m t) * albedo + (1 - exp(-sigma_m t)) * medium_color.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/geometry.hpp"
#include "aqua/image.hpp"
#include "aqua/json_util.hpp"
#include "aqua/parallel.hpp"

namespace aqua {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
};

struct Box {
  Vec3 lo = Vec3::Constant(-0.5);
  Vec3 hi = Vec3::Constant(0.5);
};

/// Axis-aligned ellipsoid.
struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Vec3 radii = Vec3::Constant(0.5);
};

using Shape = std::variant<Sphere, Box, Ellipsoid>;

struct Primitive {
  Shape shape;
  Vec3 albedo = Vec3::Constant(0.5);
};

/// Small spheres redrawn independently for every frame inside that frame's
/// view frustum, between `near` and `far` units from the camera.
struct FloaterSpec {
  int count = 10;
  double radius = 0.04;
  Vec3 albedo{0.8, 0.85, 0.8};
  double near = 0.5;
  double far = 1.5;
  std::uint64_t seed = 1;
};

/// One ellipsoid following a smooth closed path:
///   center + amplitude * (sin(a + phase), 0.5 sin(2a), cos(a + phase)),
///   a = 2 pi cycles frame / frames.
struct FishSpec {
  Vec3 radii{0.3, 0.1, 0.12};
  Vec3 albedo{0.9, 0.5, 0.1};
  Vec3 center = Vec3::Zero();
  Vec3 amplitude{0.6, 0.1, 0.6};
  double cycles = 1.0;
  double phase = 0.0;
};

using DistractorSpec = std::variant<FloaterSpec, FishSpec>;

struct MediumSpec {
  double density = 0.05;
  Vec3 color{0.05, 0.15, 0.20};
};

struct OrbitSpec {
  int count = 20;
  int frames = 20;
  double radius = 3.2;
  Vec3 target = Vec3::Zero();
  double elevation_deg = 30.0;
  double azimuth_offset_deg = 0.0;
};

struct ImageSpec {
  int width = 64;
  int height = 48;
  double fov_deg = 40.0;
  int supersample = 3;
};

struct SceneSpec {
  std::string name = "scene";
  ImageSpec image;
  MediumSpec medium;
  std::vector<Primitive> primitives;
  std::vector<DistractorSpec> distractors;
  OrbitSpec cameras;

  void validate() const;
  Camera camera(int frame) const;
  /// Distractor geometry present in `frame`.
  std::vector<Primitive> distractors_at(int frame) const;
};

// ---------------------------------------------------------------------------
// Ray intersection.

namespace detail {

constexpr double kHitEps = 1e-9;

inline std::optional<double> hit_sphere(const Sphere& s, const Vec3& o, const Vec3& d) {
  const Vec3 oc = o - s.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double t0 = -b - root;
  if (t0 > kHitEps) return t0;
  const double t1 = -b + root;
  if (t1 > kHitEps) return t1;
  return std::nullopt;
}

inline std::optional<double> hit_box(const Box& b, const Vec3& o, const Vec3& d) {
  const Aabb box{b.lo, b.hi};
  const auto range = box.intersect(o, d);
  if (!range) return std::nullopt;
  if (range->first > kHitEps) return range->first;
  if (range->second > kHitEps) return range->second;
  return std::nullopt;
}

inline std::optional<double> hit_ellipsoid(const Ellipsoid& e, const Vec3& o, const Vec3& d) {
  // Scale space so the ellipsoid becomes a unit sphere; t is preserved.
  const Vec3 os = (o - e.center).cwiseQuotient(e.radii);
  const Vec3 ds = d.cwiseQuotient(e.radii);
  const double a = ds.squaredNorm();
  const double b = os.dot(ds);
  const double c = os.squaredNorm() - 1.0;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double t0 = (-b - root) / a;
  if (t0 > kHitEps) return t0;
  const double t1 = (-b + root) / a;
  if (t1 > kHitEps) return t1;
  return std::nullopt;
}

inline std::optional<double> hit(const Shape& s, const Vec3& o, const Vec3& d) {
  return std::visit(
      [&](const auto& shape) -> std::optional<double> {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, Sphere>) return hit_sphere(shape, o, d);
        else if constexpr (std::is_same_v<T, Box>) return hit_box(shape, o, d);
        else return hit_ellipsoid(shape, o, d);
      },
      s);
}

inline bool inside_unit_cube(const Shape& s) {
  constexpr double tol = 1e-9;
  auto in = [&](const Vec3& lo, const Vec3& hi) {
    return (lo.array() >= -1.0 - tol).all() && (hi.array() <= 1.0 + tol).all();
  };
  return std::visit(
      [&](const auto& shape) {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, Sphere>)
          return in(shape.center.array() - shape.radius, shape.center.array() + shape.radius);
        else if constexpr (std::is_same_v<T, Box>) return in(shape.lo, shape.hi);
        else return in(shape.center - shape.radii, shape.center + shape.radii);
      },
      s);
}

}  // namespace detail

/// Fraction of light surviving a path of length t through the medium.
inline double medium_transmittance(double density, double t) { return std::exp(-density * t); }

inline Vec3 attenuate(const MediumSpec& m, const Vec3& albedo, double t) {
  const double tr = medium_transmittance(m.density, t);
  return tr * albedo + (1.0 - tr) * m.color;
}

inline void SceneSpec::validate() const {
  if (image.width < 1 || image.height < 1) throw InvalidArgument("scene image size must be positive");
  if (image.supersample < 1) throw InvalidArgument("scene supersample must be >= 1");
  if (!(medium.density >= 0.0)) throw InvalidArgument("medium density must be non-negative");
  if (cameras.frames < 1 || cameras.count < 1) throw InvalidArgument("camera frame count must be >= 1");
  for (std::size_t i = 0; i < primitives.size(); ++i)
    if (!detail::inside_unit_cube(primitives[i].shape))
      throw InvalidArgument("primitive " + std::to_string(i) + " extends outside the unit cube [-1,1]^3");
}

inline Camera SceneSpec::camera(int frame) const {
  const int slot = frame % cameras.count;
  const double az = 2.0 * std::numbers::pi * slot / cameras.count + cameras.azimuth_offset_deg * std::numbers::pi / 180.0;
  const double el = cameras.elevation_deg * std::numbers::pi / 180.0;
  const Vec3 eye = cameras.target + cameras.radius * Vec3(std::cos(el) * std::cos(az), std::sin(el),
                                                          std::cos(el) * std::sin(az));
  return Camera::look_at(eye, cameras.target, Vec3::UnitY(), image.fov_deg, image.width, image.height);
}

inline std::vector<Primitive> SceneSpec::distractors_at(int frame) const {
  std::vector<Primitive> out;
  const Camera cam = camera(frame);
  for (const auto& d : distractors) {
    if (const auto* f = std::get_if<FloaterSpec>(&d)) {
      std::mt19937_64 rng(derive_seed(f->seed, static_cast<std::uint64_t>(frame)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (int i = 0; i < f->count; ++i) {
        const double u = unit(rng) * cam.width;
        const double v = unit(rng) * cam.height;
        const double depth = f->near + unit(rng) * (f->far - f->near);
        out.push_back({Sphere{cam.position + depth * cam.direction_at(u, v), f->radius}, f->albedo});
      }
    } else {
      const auto& fish = std::get<FishSpec>(d);
      const double a = 2.0 * std::numbers::pi * fish.cycles * frame / cameras.frames;
      const Vec3 offset(std::sin(a + fish.phase), 0.5 * std::sin(2.0 * a), std::cos(a + fish.phase));
      out.push_back({Ellipsoid{fish.center + fish.amplitude.cwiseProduct(offset), fish.radii}, fish.albedo});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON.

inline SceneSpec scene_from_json(const Json& j) {
  using namespace json_util;
  const std::string root;
  check_keys(j, root, {"name", "image", "medium", "primitives", "distractors", "cameras"});
  SceneSpec s;
  if (j.contains("name")) s.name = string(j.at("name"), "/name");

  if (j.contains("image")) {
    const Json& im = j.at("image");
    const std::string p = "/image";
    check_keys(im, p, {"width", "height", "fov_deg", "supersample"});
    s.image.width = static_cast<int>(integer_or(im, p, "width", s.image.width));
    s.image.height = static_cast<int>(integer_or(im, p, "height", s.image.height));
    s.image.fov_deg = number_or(im, p, "fov_deg", s.image.fov_deg);
    s.image.supersample = static_cast<int>(integer_or(im, p, "supersample", s.image.supersample));
    if (s.image.width < 1) throw SchemaError("/image/width", "must be >= 1");
    if (s.image.height < 1) throw SchemaError("/image/height", "must be >= 1");
    if (s.image.supersample < 1) throw SchemaError("/image/supersample", "must be >= 1");
  }

  if (j.contains("medium")) {
    const Json& m = j.at("medium");
    const std::string p = "/medium";
    check_keys(m, p, {"density", "color"});
    s.medium.density = number_or(m, p, "density", s.medium.density);
    if (m.contains("color")) s.medium.color = vec3(m, p, "color");
    if (!(s.medium.density >= 0.0)) throw SchemaError("/medium/density", "must be non-negative");
  }

  if (j.contains("primitives")) {
    const Json& arr = j.at("primitives");
    if (!arr.is_array()) throw SchemaError("/primitives", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const Json& e = arr[i];
      const std::string p = child("/primitives", i);
      const std::string type = string(at(e, p, "type"), child(p, "type"));
      Primitive prim;
      if (type == "sphere") {
        check_keys(e, p, {"type", "center", "radius", "albedo"});
        prim.shape = Sphere{vec3(e, p, "center"), number(e, p, "radius")};
      } else if (type == "box") {
        check_keys(e, p, {"type", "min", "max", "albedo"});
        prim.shape = Box{vec3(e, p, "min"), vec3(e, p, "max")};
      } else if (type == "ellipsoid") {
        check_keys(e, p, {"type", "center", "radii", "albedo"});
        prim.shape = Ellipsoid{vec3(e, p, "center"), vec3(e, p, "radii")};
      } else {
        throw SchemaError(child(p, "type"), "unknown primitive type '" + type + "'");
      }
      prim.albedo = vec3(e, p, "albedo");
      if (!detail::inside_unit_cube(prim.shape)) throw SchemaError(p, "primitive extends outside the unit cube");
      s.primitives.push_back(prim);
    }
  }

  if (j.contains("distractors")) {
    const Json& arr = j.at("distractors");
    if (!arr.is_array()) throw SchemaError("/distractors", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const Json& e = arr[i];
      const std::string p = child("/distractors", i);
      const std::string type = string(at(e, p, "type"), child(p, "type"));
      if (type == "floaters") {
        check_keys(e, p, {"type", "count", "radius", "albedo", "near", "far", "seed"});
        FloaterSpec f;
        f.count = static_cast<int>(integer_or(e, p, "count", f.count));
        f.radius = number_or(e, p, "radius", f.radius);
        if (e.contains("albedo")) f.albedo = vec3(e, p, "albedo");
        f.near = number_or(e, p, "near", f.near);
        f.far = number_or(e, p, "far", f.far);
        f.seed = static_cast<std::uint64_t>(integer_or(e, p, "seed", static_cast<long long>(f.seed)));
        if (!(f.far >= f.near) || !(f.near > 0.0)) throw SchemaError(p, "floaters need 0 < near <= far");
        s.distractors.emplace_back(f);
      } else if (type == "fish") {
        check_keys(e, p, {"type", "radii", "albedo", "center", "amplitude", "cycles", "phase"});
        FishSpec f;
        if (e.contains("radii")) f.radii = vec3(e, p, "radii");
        if (e.contains("albedo")) f.albedo = vec3(e, p, "albedo");
        if (e.contains("center")) f.center = vec3(e, p, "center");
        if (e.contains("amplitude")) f.amplitude = vec3(e, p, "amplitude");
        f.cycles = number_or(e, p, "cycles", f.cycles);
        f.phase = number_or(e, p, "phase", f.phase);
        s.distractors.emplace_back(f);
      } else {
        throw SchemaError(child(p, "type"), "unknown distractor type '" + type + "'");
      }
    }
  }

  if (j.contains("cameras")) {
    const Json& c = j.at("cameras");
    const std::string p = "/cameras";
    check_keys(c, p, {"count", "frames", "radius", "target", "elevation_deg", "azimuth_offset_deg"});
    s.cameras.frames = static_cast<int>(integer_or(c, p, "frames", s.cameras.frames));
    s.cameras.count = static_cast<int>(integer_or(c, p, "count", s.cameras.frames));
    s.cameras.radius = number_or(c, p, "radius", s.cameras.radius);
    if (c.contains("target")) s.cameras.target = vec3(c, p, "target");
    s.cameras.elevation_deg = number_or(c, p, "elevation_deg", s.cameras.elevation_deg);
    s.cameras.azimuth_offset_deg = number_or(c, p, "azimuth_offset_deg", s.cameras.azimuth_offset_deg);
    if (s.cameras.frames < 1) throw SchemaError("/cameras/frames", "must be >= 1");
    if (s.cameras.count < 1) throw SchemaError("/cameras/count", "must be >= 1");
    if (!(s.cameras.radius > 0.0)) throw SchemaError("/cameras/radius", "must be positive");
  }
  s.validate();
  return s;
}

inline Json scene_to_json(const SceneSpec& s) {
  using json_util::to_json;
  Json prims = Json::array();
  for (const auto& p : s.primitives) {
    Json e;
    std::visit(
        [&](const auto& shape) {
          using T = std::decay_t<decltype(shape)>;
          if constexpr (std::is_same_v<T, Sphere>)
            e = {{"type", "sphere"}, {"center", to_json(shape.center)}, {"radius", shape.radius}};
          else if constexpr (std::is_same_v<T, Box>)
            e = {{"type", "box"}, {"min", to_json(shape.lo)}, {"max", to_json(shape.hi)}};
          else
            e = {{"type", "ellipsoid"}, {"center", to_json(shape.center)}, {"radii", to_json(shape.radii)}};
        },
        p.shape);
    e["albedo"] = to_json(p.albedo);
    prims.push_back(e);
  }
  Json dist = Json::array();
  for (const auto& d : s.distractors) {
    if (const auto* f = std::get_if<FloaterSpec>(&d)) {
      dist.push_back({{"type", "floaters"},
                      {"count", f->count},
                      {"radius", f->radius},
                      {"albedo", to_json(f->albedo)},
                      {"near", f->near},
                      {"far", f->far},
                      {"seed", f->seed}});
    } else {
      const auto& fish = std::get<FishSpec>(d);
      dist.push_back({{"type", "fish"},
                      {"radii", to_json(fish.radii)},
                      {"albedo", to_json(fish.albedo)},
                      {"center", to_json(fish.center)},
                      {"amplitude", to_json(fish.amplitude)},
                      {"cycles", fish.cycles},
                      {"phase", fish.phase}});
    }
  }
  return Json{{"name", s.name},
              {"image",
               {{"width", s.image.width},
                {"height", s.image.height},
                {"fov_deg", s.image.fov_deg},
                {"supersample", s.image.supersample}}},
              {"medium", {{"density", s.medium.density}, {"color", to_json(s.medium.color)}}},
              {"primitives", prims},
              {"distractors", dist},
              {"cameras",
               {{"count", s.cameras.count},
                {"frames", s.cameras.frames},
                {"radius", s.cameras.radius},
                {"target", to_json(s.cameras.target)},
                {"elevation_deg", s.cameras.elevation_deg},
                {"azimuth_offset_deg", s.cameras.azimuth_offset_deg}}}};
}

// ---------------------------------------------------------------------------
// Oracle rendering.

struct SceneHit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 albedo = Vec3::Zero();
  bool distractor = false;
  bool found() const { return std::isfinite(t); }
};

inline SceneHit trace(const std::vector<Primitive>& statics, const std::vector<Primitive>& movers, const Vec3& o,
                      const Vec3& d) {
  SceneHit best;
  for (const auto& p : statics) {
    if (auto t = detail::hit(p.shape, o, d); t && *t < best.t) best = {*t, p.albedo, false};
  }
  for (const auto& p : movers) {
    if (auto t = detail::hit(p.shape, o, d); t && *t < best.t) best = {*t, p.albedo, true};
  }
  return best;
}

struct OracleFrame {
  Image image;
  std::vector<double> depth;                 // nearest hit through the pixel center, +inf on a miss
  std::vector<std::uint8_t> distractor_mask;  // 1 where any sub-pixel ray first hits a distractor
};

/// Renders `camera` with the distractors of `frame`, averaging
/// supersample x supersample rays per pixel.
inline OracleFrame oracle_render(const SceneSpec& scene, const Camera& camera, int frame,
                                 bool include_distractors = true) {
  if (frame < 0) throw InvalidArgument("oracle_render: negative frame index");
  camera.validate();
  const auto movers = include_distractors ? scene.distractors_at(frame) : std::vector<Primitive>{};
  const int ss = scene.image.supersample;
  OracleFrame out;
  out.image = Image(camera.width, camera.height);
  out.depth.assign(out.image.size(), std::numeric_limits<double>::infinity());
  out.distractor_mask.assign(out.image.size(), 0);
  for (int r = 0; r < camera.height; ++r) {
    for (int c = 0; c < camera.width; ++c) {
      Vec3 acc = Vec3::Zero();
      bool any_distractor = false;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Vec3 d = camera.direction_at(c + (sx + 0.5) / ss, r + (sy + 0.5) / ss);
          const SceneHit h = trace(scene.primitives, movers, camera.position, d);
          acc += h.found() ? attenuate(scene.medium, h.albedo, h.t) : scene.medium.color;
          any_distractor = any_distractor || h.distractor;
        }
      }
      const std::size_t k = static_cast<std::size_t>(r) * camera.width + c;
      out.image.pixels[k] = acc / static_cast<double>(ss * ss);
      out.distractor_mask[k] = any_distractor ? 1 : 0;
      const SceneHit center = trace(scene.primitives, movers, camera.position, camera.direction_at(c + 0.5, r + 0.5));
      out.depth[k] = center.t;
    }
  }
  return out;
}

}  // namespace aqua
