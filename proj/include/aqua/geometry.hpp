#pragma once

// Pinhole cameras, ray generation and sample placement along rays.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/parallel.hpp"

namespace aqua {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Aabb {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }

  /// Slab test. Returns the parametric entry/exit of the ray, or nullopt on a miss.
  std::optional<std::pair<double, double>> intersect(const Vec3& origin, const Vec3& dir) const {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (dir[a] == 0.0) {
        if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
        continue;
      }
      const double inv = 1.0 / dir[a];
      double ta = (lo[a] - origin[a]) * inv;
      double tb = (hi[a] - origin[a]) * inv;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (t1 < t0) return std::nullopt;
    return std::make_pair(t0, t1);
  }
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
};

/// Pinhole camera. Camera axes follow the x-right, y-down, z-forward
/// convention; `rotation` maps camera axes to world axes and `position` is
/// the optical center in world units.
struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();
  Intrinsics intrinsics;
  int width = 1;
  int height = 1;

  void validate() const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-9)) throw InvalidArgument("camera rotation is not orthonormal");
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0))
      throw InvalidArgument("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw InvalidArgument("camera resolution must be at least 1x1");
  }

  /// Unit world-space direction through image-plane point (u, v) in pixels.
  Vec3 direction_at(double u, double v) const {
    const Vec3 d((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0);
    return (rotation * d).normalized();
  }

  /// Camera at `eye` looking at `target`; `fov_x_deg` is the horizontal field of view.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_x_deg,
                        int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) throw InvalidArgument("look_at: up vector parallel to view direction");
    right.normalize();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.rotation.col(0) = right;
    cam.rotation.col(1) = down;
    cam.rotation.col(2) = forward;
    cam.position = eye;
    const double f = 0.5 * width / std::tan(0.5 * fov_x_deg * std::numbers::pi / 180.0);
    cam.intrinsics = {f, f, 0.5 * width, 0.5 * height};
    cam.width = width;
    cam.height = height;
    return cam;
  }
};

struct PixelId {
  int image = 0;
  int row = 0;
  int col = 0;
  friend bool operator==(const PixelId&, const PixelId&) = default;
  friend auto operator<=>(const PixelId&, const PixelId&) = default;
};

// Pixel selections accepted by generate_rays.
struct FullImage {};
/// Square patches; each origin is the top-left (row, col) of a patch.
struct PatchList {
  std::vector<PixelId> origins;
  int size = 16;
};
/// `count` pixels drawn uniformly with replacement.
struct RandomSet {
  std::size_t count = 0;
};
struct PixelList {
  std::vector<PixelId> pixels;
};
using PixelSelection = std::variant<FullImage, PatchList, RandomSet, PixelList>;

/// Depth range assigned to generated rays. When `clip` is set the range is
/// tightened to the box; rays that miss the box keep [near, far].
struct RayRange {
  double near = 0.0;
  double far = 1.0;
  std::optional<Aabb> clip;
};

struct RayBatch {
  std::vector<Vec3> origins;
  std::vector<Vec3> directions;
  std::vector<double> t_near;
  std::vector<double> t_far;
  std::vector<PixelId> pixels;

  std::size_t size() const { return origins.size(); }

  void reserve(std::size_t n) {
    origins.reserve(n);
    directions.reserve(n);
    t_near.reserve(n);
    t_far.reserve(n);
    pixels.reserve(n);
  }

  void push_back(const Vec3& o, const Vec3& d, double tn, double tf, PixelId id) {
    origins.push_back(o);
    directions.push_back(d);
    t_near.push_back(tn);
    t_far.push_back(tf);
    pixels.push_back(id);
  }

  void append(const RayBatch& other) {
    origins.insert(origins.end(), other.origins.begin(), other.origins.end());
    directions.insert(directions.end(), other.directions.begin(), other.directions.end());
    t_near.insert(t_near.end(), other.t_near.begin(), other.t_near.end());
    t_far.insert(t_far.end(), other.t_far.begin(), other.t_far.end());
    pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
  }
};

/// Ordered samples along each ray of a batch. Every ray carries the same
/// number of samples; per-sample arrays are ray-major.
struct SampleSet {
  std::size_t per_ray = 0;
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<Vec3> positions;
  // Per ray.
  std::vector<double> near;
  std::vector<double> far;
  std::vector<Vec3> origins;
  std::vector<Vec3> directions;

  std::size_t ray_count() const { return near.size(); }
  std::size_t size() const { return t.size(); }

  std::span<const double> ray_t(std::size_t r) const { return {t.data() + r * per_ray, per_ray}; }
  std::span<const double> ray_delta(std::size_t r) const {
    return {delta.data() + r * per_ray, per_ray};
  }

  void resize(std::size_t rays, std::size_t samples_per_ray) {
    per_ray = samples_per_ray;
    t.assign(rays * per_ray, 0.0);
    delta.assign(rays * per_ray, 0.0);
    positions.assign(rays * per_ray, Vec3::Zero());
    near.assign(rays, 0.0);
    far.assign(rays, 0.0);
    origins.assign(rays, Vec3::Zero());
    directions.assign(rays, Vec3::Zero());
  }
};

namespace detail {

inline void check_pixel(const Camera& cam, int row, int col, std::size_t index) {
  if (row < 0 || col < 0 || row >= cam.height || col >= cam.width)
    throw InvalidArgument("pixel selection out of bounds at index " + std::to_string(index) +
                          " (row " + std::to_string(row) + ", col " + std::to_string(col) + ")");
}

inline std::pair<double, double> clip_range(const RayRange& range, const Vec3& o, const Vec3& d) {
  double tn = range.near;
  double tf = range.far;
  if (range.clip) {
    if (auto hit = range.clip->intersect(o, d)) {
      const double a = std::max(hit->first, range.near);
      const double b = hit->second;
      if (b > a) {
        tn = a;
        tf = b;
      }
    }
  }
  return {tn, tf};
}

// Fills ray r's depths with `ts` and derives deltas from midpoint bin edges.
inline void set_ray_samples_from_midpoints(SampleSet& s, std::size_t r, std::span<const double> ts) {
  const std::size_t n = ts.size();
  const double tn = s.near[r];
  const double tf = s.far[r];
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = i == 0 ? tn : 0.5 * (ts[i - 1] + ts[i]);
    const double hi = i + 1 == n ? tf : 0.5 * (ts[i] + ts[i + 1]);
    const std::size_t k = r * s.per_ray + i;
    s.t[k] = ts[i];
    s.delta[k] = hi - lo;
    s.positions[k] = s.origins[r] + ts[i] * s.directions[r];
  }
}

}  // namespace detail

/// One ray per selected pixel through the pixel center, or through a
/// uniformly jittered point inside the pixel when `rng_seed` is given.
/// RandomSet selections draw pixels from the same seed (0 when absent).
inline RayBatch generate_rays(const Camera& cam, const PixelSelection& selection,
                              std::optional<std::uint64_t> rng_seed, const RayRange& range = {},
                              int image_index = 0) {
  cam.validate();
  std::vector<PixelId> pixels;
  std::visit(
      [&](const auto& sel) {
        using T = std::decay_t<decltype(sel)>;
        if constexpr (std::is_same_v<T, FullImage>) {
          pixels.reserve(static_cast<std::size_t>(cam.width) * cam.height);
          for (int r = 0; r < cam.height; ++r)
            for (int c = 0; c < cam.width; ++c) pixels.push_back({image_index, r, c});
        } else if constexpr (std::is_same_v<T, PatchList>) {
          if (sel.size < 1) throw InvalidArgument("patch size must be positive");
          for (std::size_t p = 0; p < sel.origins.size(); ++p) {
            const auto& o = sel.origins[p];
            detail::check_pixel(cam, o.row, o.col, p);
            detail::check_pixel(cam, o.row + sel.size - 1, o.col + sel.size - 1, p);
            for (int r = 0; r < sel.size; ++r)
              for (int c = 0; c < sel.size; ++c) pixels.push_back({image_index, o.row + r, o.col + c});
          }
        } else if constexpr (std::is_same_v<T, RandomSet>) {
          std::mt19937_64 rng(rng_seed.value_or(0));
          std::uniform_int_distribution<int> rows(0, cam.height - 1);
          std::uniform_int_distribution<int> cols(0, cam.width - 1);
          for (std::size_t i = 0; i < sel.count; ++i) {
            const int r = rows(rng);
            pixels.push_back({image_index, r, cols(rng)});
          }
        } else {
          for (std::size_t i = 0; i < sel.pixels.size(); ++i) {
            detail::check_pixel(cam, sel.pixels[i].row, sel.pixels[i].col, i);
            pixels.push_back(sel.pixels[i]);
          }
        }
      },
      selection);

  std::optional<std::mt19937_64> jitter;
  if (rng_seed) jitter.emplace(derive_seed(*rng_seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RayBatch batch;
  batch.reserve(pixels.size());
  for (const auto& px : pixels) {
    double du = 0.5;
    double dv = 0.5;
    if (jitter) {
      du = unit(*jitter);
      dv = unit(*jitter);
    }
    const Vec3 d = cam.direction_at(px.col + du, px.row + dv);
    const auto [tn, tf] = detail::clip_range(range, cam.position, d);
    if (!(tn >= 0.0) || !(tf > tn)) throw InvalidArgument("ray range must satisfy 0 <= near < far");
    batch.push_back(cam.position, d, tn, tf, px);
  }
  return batch;
}

/// n samples per ray, one per equal-width bin of [t_near, t_far]. Without
/// jitter each sample sits at its bin midpoint. delta is the bin width.
inline SampleSet stratified_samples(const RayBatch& rays, std::size_t n, bool jitter,
                                    std::uint64_t rng_seed) {
  if (n < 2) throw InvalidArgument("stratified_samples needs at least 2 samples per ray");
  SampleSet s;
  s.resize(rays.size(), n);
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const double tn = rays.t_near[r];
    const double tf = rays.t_far[r];
    if (!(tf > tn)) throw InvalidArgument("ray " + std::to_string(r) + " has t_far <= t_near");
    s.near[r] = tn;
    s.far[r] = tf;
    s.origins[r] = rays.origins[r];
    s.directions[r] = rays.directions[r];
    const double width = (tf - tn) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = jitter ? unit(rng) : 0.5;
      const double lo = tn + static_cast<double>(i) * width;
      const std::size_t k = r * n + i;
      s.t[k] = lo + u * width;
      s.delta[k] = width;
      s.positions[k] = rays.origins[r] + s.t[k] * rays.directions[r];
    }
  }
  return s;
}

/// Draws n_fine extra depths per ray from the piecewise-constant density
/// proportional to weights + 1e-5 over the coarse bins, and returns the
/// sorted union with deltas recomputed from midpoint bin edges.
inline SampleSet importance_resample(const SampleSet& coarse, std::span<const double> weights,
                                     std::size_t n_fine, std::uint64_t rng_seed) {
  constexpr double kFloor = 1e-5;
  if (weights.size() != coarse.size())
    throw InvalidArgument("importance_resample: weight count does not match coarse samples");
  const std::size_t nc = coarse.per_ray;
  SampleSet out;
  out.resize(coarse.ray_count(), nc + n_fine);
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> edges(nc + 1);
  std::vector<double> cdf(nc + 1);
  std::vector<double> merged;
  merged.reserve(nc + n_fine);
  for (std::size_t r = 0; r < coarse.ray_count(); ++r) {
    out.near[r] = coarse.near[r];
    out.far[r] = coarse.far[r];
    out.origins[r] = coarse.origins[r];
    out.directions[r] = coarse.directions[r];
    const auto t = coarse.ray_t(r);
    const auto w = weights.subspan(r * nc, nc);

    merged.assign(t.begin(), t.end());
    if (n_fine > 0) {
      edges[0] = coarse.near[r];
      for (std::size_t i = 1; i < nc; ++i) edges[i] = 0.5 * (t[i - 1] + t[i]);
      edges[nc] = coarse.far[r];
      cdf[0] = 0.0;
      for (std::size_t i = 0; i < nc; ++i) {
        const double wi = std::max(w[i], 0.0) + kFloor;
        cdf[i + 1] = cdf[i] + wi;
      }
      const double total = cdf[nc];
      for (std::size_t j = 0; j < n_fine; ++j) {
        const double u = unit(rng) * total;
        auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
        std::size_t bin = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()) - 1, nc - 1);
        const double mass = cdf[bin + 1] - cdf[bin];
        const double frac = mass > 0.0 ? (u - cdf[bin]) / mass : 0.5;
        merged.push_back(edges[bin] + std::clamp(frac, 0.0, 1.0) * (edges[bin + 1] - edges[bin]));
      }
      std::sort(merged.begin(), merged.end());
      // Coincident draws are nudged upward to keep depths strictly increasing.
      for (std::size_t i = 1; i < merged.size(); ++i)
        if (!(merged[i] > merged[i - 1]))
          merged[i] = std::nextafter(merged[i - 1], std::numeric_limits<double>::infinity());
    }
    detail::set_ray_samples_from_midpoints(out, r, merged);
    if (n_fine == 0) {
      // Identity: keep the coarse deltas untouched.
      for (std::size_t i = 0; i < nc; ++i) out.delta[r * nc + i] = coarse.delta[r * nc + i];
    }
  }
  return out;
}

}  // namespace aqua
