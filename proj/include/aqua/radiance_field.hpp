#pragma once

// Trainable voxel-grid radiance field: trilinear interpolation of
// pre-activation parameters, softplus density and sigmoid color.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/geometry.hpp"

namespace aqua {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Water-like background returned for samples outside the grid.
inline const Vec3 kDefaultMediumColor{0.05, 0.15, 0.20};

struct GridResolution {
  int nx = 2;
  int ny = 2;
  int nz = 2;
  std::size_t vertex_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  friend bool operator==(const GridResolution&, const GridResolution&) = default;
};

struct FieldOutputs {
  std::vector<double> sigma;
  std::vector<Vec3> rgb;

  std::size_t size() const { return sigma.size(); }
  void resize(std::size_t n) {
    sigma.assign(n, 0.0);
    rgb.assign(n, Vec3::Zero());
  }
};

/// Parameter-shaped gradient accumulator: [density (V) | color (3V)].
struct GradientBuffer {
  std::size_t vertices = 0;
  std::vector<double> values;

  explicit GradientBuffer(std::size_t vertex_count = 0)
      : vertices(vertex_count), values(4 * vertex_count, 0.0) {}

  std::span<double> d_density() { return {values.data(), vertices}; }
  std::span<double> d_color() { return {values.data() + vertices, 3 * vertices}; }
  std::span<const double> d_density() const { return {values.data(), vertices}; }
  std::span<const double> d_color() const { return {values.data() + vertices, 3 * vertices}; }

  void zero() { std::fill(values.begin(), values.end(), 0.0); }

  /// values += other.values, element by element.
  void merge(const GradientBuffer& other) {
    if (other.values.size() != values.size()) throw InvalidArgument("gradient buffer shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  }
};

class VoxelField {
 public:
  /// Stencil of the eight vertices surrounding a point.
  struct Stencil {
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
    bool inside = false;
  };

  VoxelField() : VoxelField({2, 2, 2}, Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)}) {}
  VoxelField(GridResolution res, Aabb bounds, Vec3 medium_color = kDefaultMediumColor)
      : res_(res), bounds_(bounds), medium_color_(medium_color) {
    if (res.nx < 2 || res.ny < 2 || res.nz < 2)
      throw InvalidArgument("voxel field resolution must be at least 2 per axis");
    if (!((bounds.hi.array() > bounds.lo.array()).all()))
      throw InvalidArgument("voxel field bounds must have positive extent");
    params_.assign(4 * res.vertex_count(), 0.0);
  }

  /// Near-empty start: density activates to 0.01 and color to mid-gray.
  static VoxelField initialized(GridResolution res, Aabb bounds, Vec3 medium_color = kDefaultMediumColor,
                                double initial_density = 0.01) {
    VoxelField f(res, bounds, medium_color);
    const double d = softplus_inverse(initial_density);
    auto dens = f.density_params();
    std::fill(dens.begin(), dens.end(), d);
    return f;
  }

  const GridResolution& resolution() const { return res_; }
  const Aabb& bounds() const { return bounds_; }
  const Vec3& medium_color() const { return medium_color_; }
  std::size_t vertex_count() const { return res_.vertex_count(); }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::span<double> density_params() { return {params_.data(), vertex_count()}; }
  std::span<double> color_params() { return {params_.data() + vertex_count(), 3 * vertex_count()}; }
  std::span<const double> density_params() const { return {params_.data(), vertex_count()}; }
  std::span<const double> color_params() const {
    return {params_.data() + vertex_count(), 3 * vertex_count()};
  }

  std::size_t vertex_index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * res_.ny + static_cast<std::size_t>(iy)) * res_.nx +
           static_cast<std::size_t>(ix);
  }

  Vec3 vertex_position(int ix, int iy, int iz) const {
    const Vec3 ext = bounds_.hi - bounds_.lo;
    return bounds_.lo + Vec3(ext.x() * ix / (res_.nx - 1), ext.y() * iy / (res_.ny - 1),
                             ext.z() * iz / (res_.nz - 1));
  }

  Stencil stencil(const Vec3& p) const {
    Stencil s;
    if (!bounds_.contains(p)) return s;
    s.inside = true;
    const int n[3] = {res_.nx, res_.ny, res_.nz};
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
      const double g = (p[a] - bounds_.lo[a]) / (bounds_.hi[a] - bounds_.lo[a]) * (n[a] - 1);
      int c = static_cast<int>(std::floor(g));
      c = std::clamp(c, 0, n[a] - 2);
      i0[a] = c;
      f[a] = g - c;
    }
    for (int k = 0; k < 8; ++k) {
      const int dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
      s.index[k] = vertex_index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
      s.weight[k] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dz ? f[2] : 1.0 - f[2]);
    }
    return s;
  }

  /// Activated density and color at a single point.
  void evaluate(const Vec3& p, double& sigma, Vec3& rgb) const {
    const Stencil s = stencil(p);
    if (!s.inside) {
      sigma = 0.0;
      rgb = medium_color_;
      return;
    }
    const std::size_t V = vertex_count();
    double d = 0.0;
    double c[3] = {0.0, 0.0, 0.0};
    for (int k = 0; k < 8; ++k) {
      const double w = s.weight[k];
      d += w * params_[s.index[k]];
      const double* cp = params_.data() + V + 3 * s.index[k];
      c[0] += w * cp[0];
      c[1] += w * cp[1];
      c[2] += w * cp[2];
    }
    sigma = softplus(d);
    rgb = Vec3(sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2]));
  }

  /// Evaluates samples [begin, end) of `positions` into `out` (already sized).
  void query_range(std::span<const Vec3> positions, std::size_t begin, std::size_t end,
                   FieldOutputs& out) const {
    for (std::size_t i = begin; i < end; ++i) evaluate(positions[i], out.sigma[i], out.rgb[i]);
  }

  FieldOutputs query(const SampleSet& samples) const {
    FieldOutputs out;
    out.resize(samples.size());
    query_range(samples.positions, 0, samples.size(), out);
    return out;
  }

  /// Accumulates parameter gradients for samples [begin, end).
  void backward_range(std::span<const Vec3> positions, std::span<const double> d_sigma,
                      std::span<const Vec3> d_rgb, std::size_t begin, std::size_t end,
                      GradientBuffer& grads) const {
    const std::size_t V = vertex_count();
    for (std::size_t i = begin; i < end; ++i) {
      const double gs = d_sigma[i];
      const Vec3& gc = d_rgb[i];
      if (!std::isfinite(gs) || !gc.allFinite())
        throw InvalidArgument("non-finite upstream gradient at sample " + std::to_string(i));
      if (gs == 0.0 && gc.isZero(0.0)) continue;
      const Stencil s = stencil(positions[i]);
      if (!s.inside) continue;
      double d = 0.0;
      double c[3] = {0.0, 0.0, 0.0};
      for (int k = 0; k < 8; ++k) {
        const double w = s.weight[k];
        d += w * params_[s.index[k]];
        const double* cp = params_.data() + V + 3 * s.index[k];
        c[0] += w * cp[0];
        c[1] += w * cp[1];
        c[2] += w * cp[2];
      }
      // softplus' = sigmoid, sigmoid' = s(1 - s).
      const double g_d = gs * sigmoid(d);
      double g_c[3];
      for (int ch = 0; ch < 3; ++ch) {
        const double sc = sigmoid(c[ch]);
        g_c[ch] = gc[ch] * sc * (1.0 - sc);
      }
      for (int k = 0; k < 8; ++k) {
        const double w = s.weight[k];
        grads.values[s.index[k]] += w * g_d;
        double* gp = grads.values.data() + V + 3 * s.index[k];
        gp[0] += w * g_c[0];
        gp[1] += w * g_c[1];
        gp[2] += w * g_c[2];
      }
    }
  }

  void backward(const SampleSet& samples, std::span<const double> d_sigma, std::span<const Vec3> d_rgb,
                GradientBuffer& grads) const {
    if (d_sigma.size() != samples.size() || d_rgb.size() != samples.size())
      throw InvalidArgument("backward: upstream gradient shape does not match samples");
    if (grads.vertices != vertex_count()) throw InvalidArgument("backward: gradient buffer shape mismatch");
    backward_range(samples.positions, d_sigma, d_rgb, 0, samples.size(), grads);
  }

 private:
  GridResolution res_;
  Aabb bounds_;
  Vec3 medium_color_;
  std::vector<double> params_;
};

}  // namespace aqua
