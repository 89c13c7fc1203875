#pragma once

// Volume rendering: the standard alpha-compositing renderer and the
// single-surface renderer that replaces the composited weight profile by a
// fixed-width Gaussian at the median depth plus a clamped constant offset.
// Both come with exact reverse-mode derivatives w.r.t. per-sample density
// and color.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/geometry.hpp"
#include "aqua/radiance_field.hpp"

namespace aqua {

enum class RendererKind { kBaseline, kSingleSurface };

inline std::string_view to_string(RendererKind k) {
  return k == RendererKind::kBaseline ? "baseline" : "single_surface";
}

inline RendererKind renderer_from_string(std::string_view s) {
  if (s == "baseline") return RendererKind::kBaseline;
  if (s == "single_surface") return RendererKind::kSingleSurface;
  throw InvalidArgument("unknown renderer '" + std::string(s) + "' (expected baseline or single_surface)");
}

struct RendererConfig {
  RendererKind kind = RendererKind::kSingleSurface;
  double eta = 0.5;
  double base = 0.2;
  bool normalize_weights = false;
};

/// Per-sample weights of every pipeline stage, ray-major.
struct WeightProfile {
  std::size_t per_ray = 0;
  std::vector<double> w;         // composited weights T_i (1 - exp(-sigma_i delta_i))
  std::vector<double> omega;     // running sum of w
  std::vector<double> gaussian;  // unclamped Gaussian density at t_i (0 on fallback rays)
  std::vector<double> w_hat;     // final per-sample render weight
  // Per ray.
  std::vector<double> mu_t;
  std::vector<std::uint8_t> surface_found;
  std::vector<std::size_t> crossing;
  std::vector<double> transmittance;  // transmittance past the last sample

  std::size_t ray_count() const { return mu_t.size(); }

  void resize(std::size_t rays, std::size_t n) {
    per_ray = n;
    w.assign(rays * n, 0.0);
    omega.assign(rays * n, 0.0);
    gaussian.assign(rays * n, 0.0);
    w_hat.assign(rays * n, 0.0);
    mu_t.assign(rays, 0.0);
    surface_found.assign(rays, 0);
    crossing.assign(rays, 0);
    transmittance.assign(rays, 1.0);
  }
};

struct RenderOutput {
  std::vector<Vec3> rgb;
  std::vector<double> depth;
  std::vector<double> accumulation;
  /// 1 where the single-surface path was used, 0 where the ray fell back to
  /// (or was configured for) standard compositing.
  std::vector<std::uint8_t> single_surface;

  std::size_t size() const { return rgb.size(); }
  void resize(std::size_t rays) {
    rgb.assign(rays, Vec3::Zero());
    depth.assign(rays, 0.0);
    accumulation.assign(rays, 0.0);
    single_surface.assign(rays, 0);
  }
};

struct SampleGradients {
  std::vector<double> d_sigma;
  std::vector<Vec3> d_rgb;

  void resize(std::size_t n) {
    d_sigma.assign(n, 0.0);
    d_rgb.assign(n, Vec3::Zero());
  }
};

// ---------------------------------------------------------------------------
// Single-ray kernels.

/// Discrete compositing weights. Writes w and omega, returns the
/// transmittance remaining after the last sample.
inline double compute_weights(std::span<const double> delta, std::span<const double> sigma,
                              std::span<double> w, std::span<double> omega) {
  double optical = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] >= 0.0))
      throw InvalidArgument("compute_weights: negative or NaN density at sample " + std::to_string(i));
    const double tau = sigma[i] * delta[i];
    const double trans = std::exp(-optical);
    w[i] = trans * -std::expm1(-tau);
    acc += w[i];
    omega[i] = acc;
    optical += tau;
  }
  return std::exp(-optical);
}

struct MedianDepth {
  double mu = 0.0;
  bool found = false;
  std::size_t crossing = 0;
};

/// Depth where the running weight sum first exceeds 0.5, linearly
/// interpolated inside the crossing interval (omega = 0 at t_near).
inline MedianDepth median_depth(std::span<const double> t, std::span<const double> w,
                                std::span<const double> omega, double t_near) {
  MedianDepth m;
  if (omega.empty() || !(omega.back() > 0.5)) return m;
  std::size_t k = 0;
  while (!(omega[k] > 0.5)) ++k;
  const double t_prev = k == 0 ? t_near : t[k - 1];
  const double omega_prev = k == 0 ? 0.0 : omega[k - 1];
  m.mu = t_prev + (0.5 - omega_prev) / w[k] * (t[k] - t_prev);
  m.found = true;
  m.crossing = k;
  return m;
}

inline double gaussian_peak(double eta) { return 1.0 / (std::sqrt(2.0 * std::numbers::pi) * eta); }

/// Gaussian density at each depth (`w_hat`) and the final render weight
/// min(peak, w_hat + base) * delta (`weight`). When `d_weight_d_mu` is
/// non-empty it receives the derivative of each render weight w.r.t. mu,
/// which is zero on the clamped plateau.
inline void gaussian_weights(std::span<const double> t, std::span<const double> delta, double mu,
                             double eta, double base, std::span<double> w_hat, std::span<double> weight,
                             std::span<double> d_weight_d_mu = {}) {
  if (!(eta > 0.0)) throw InvalidArgument("gaussian_weights: eta must be positive");
  if (!(base >= 0.0)) throw InvalidArgument("gaussian_weights: base must be non-negative");
  const double peak = gaussian_peak(eta);
  const double inv_var = 1.0 / (eta * eta);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double x = t[i] - mu;
    const double g = peak * std::exp(-0.5 * x * x * inv_var);
    w_hat[i] = g;
    const double lifted = g + base;
    const bool clamped = !(lifted < peak);
    weight[i] = (clamped ? peak : lifted) * delta[i];
    if (!d_weight_d_mu.empty()) d_weight_d_mu[i] = clamped ? 0.0 : delta[i] * g * x * inv_var;
  }
}

namespace detail {

// Chain rule from dL/dw_i to dL/dsigma_i through the compositing weights:
// dL/dsigma_k = delta_k (b_k T_{k+1} - sum_{i>k} b_i w_i).
inline void weight_grads_to_sigma(std::span<const double> delta, std::span<const double> sigma,
                                  std::span<const double> w, std::span<const double> b,
                                  std::span<double> d_sigma) {
  const std::size_t n = sigma.size();
  double suffix = 0.0;
  // Transmittance after sample k, walking backwards from the total optical depth.
  double optical = 0.0;
  for (std::size_t i = 0; i < n; ++i) optical += sigma[i] * delta[i];
  for (std::size_t k = n; k-- > 0;) {
    const double t_next = std::exp(-optical);
    d_sigma[k] = delta[k] * (b[k] * t_next - suffix);
    suffix += b[k] * w[k];
    optical -= sigma[k] * delta[k];
  }
}

}  // namespace detail

/// Renders ray r into `out` and records its weights in `profile`.
inline void render_ray(std::size_t r, const SampleSet& samples, const FieldOutputs& field,
                       const RendererConfig& cfg, WeightProfile& profile, RenderOutput& out) {
  const std::size_t n = samples.per_ray;
  const std::size_t o = r * n;
  const auto t = samples.ray_t(r);
  const auto delta = samples.ray_delta(r);
  const std::span<const double> sigma(field.sigma.data() + o, n);
  std::span<double> w(profile.w.data() + o, n);
  std::span<double> omega(profile.omega.data() + o, n);
  std::span<double> gauss(profile.gaussian.data() + o, n);
  std::span<double> w_hat(profile.w_hat.data() + o, n);

  profile.transmittance[r] = compute_weights(delta, sigma, w, omega);
  const MedianDepth med = median_depth(t, w, omega, samples.near[r]);
  profile.mu_t[r] = med.mu;
  profile.surface_found[r] = med.found ? 1 : 0;
  profile.crossing[r] = med.crossing;

  const bool single = cfg.kind == RendererKind::kSingleSurface && med.found;
  if (single) {
    gaussian_weights(t, delta, med.mu, cfg.eta, cfg.base, gauss, w_hat);
  } else {
    std::fill(gauss.begin(), gauss.end(), 0.0);
    std::copy(w.begin(), w.end(), w_hat.begin());
  }

  Vec3 rgb = Vec3::Zero();
  double total = 0.0;
  double depth_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rgb += w_hat[i] * field.rgb[o + i];
    total += w_hat[i];
    depth_sum += w_hat[i] * t[i];
  }
  if (single && cfg.normalize_weights && total > 0.0) rgb /= total;
  out.rgb[r] = rgb;
  out.accumulation[r] = total;
  out.single_surface[r] = single ? 1 : 0;
  out.depth[r] = single ? med.mu : depth_sum / std::max(total, 1e-10);
}

/// Reverse pass for ray r given dL/drgb `g`. Writes per-sample d_sigma and
/// d_rgb into `grads`; multiplies both by `scale[i]` when `scale` is
/// non-empty.
inline void backward_ray(std::size_t r, const SampleSet& samples, const FieldOutputs& field,
                         const RendererConfig& cfg, const WeightProfile& profile,
                         const RenderOutput& out, const Vec3& g, std::span<const double> scale,
                         SampleGradients& grads) {
  const std::size_t n = samples.per_ray;
  const std::size_t o = r * n;
  const auto t = samples.ray_t(r);
  const auto delta = samples.ray_delta(r);
  const std::span<const double> sigma(field.sigma.data() + o, n);
  const std::span<const double> w(profile.w.data() + o, n);
  const std::span<const double> omega(profile.omega.data() + o, n);
  const std::span<const double> w_hat(profile.w_hat.data() + o, n);
  std::span<double> d_sigma(grads.d_sigma.data() + o, n);

  thread_local std::vector<double> b;  // dL/dw_i
  b.assign(n, 0.0);
  if (g.isZero(0.0)) {
    std::fill(d_sigma.begin(), d_sigma.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) grads.d_rgb[o + i].setZero();
    return;
  }

  if (!out.single_surface[r]) {
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = g.dot(field.rgb[o + i]);
      grads.d_rgb[o + i] = w[i] * g;
    }
    detail::weight_grads_to_sigma(delta, sigma, w, b, d_sigma);
  } else {
    const double total = out.accumulation[r];
    const bool normalized = cfg.normalize_weights && total > 0.0;
    const double mu = profile.mu_t[r];
    const double inv_var = 1.0 / (cfg.eta * cfg.eta);
    const double peak = gaussian_peak(cfg.eta);
    double d_mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& c = field.rgb[o + i];
      double d_weight;
      if (normalized) {
        d_weight = g.dot(c - out.rgb[r]) / total;
        grads.d_rgb[o + i] = (w_hat[i] / total) * g;
      } else {
        d_weight = g.dot(c);
        grads.d_rgb[o + i] = w_hat[i] * g;
      }
      const double gauss = profile.gaussian[o + i];
      if (gauss + cfg.base < peak) d_mu += d_weight * delta[i] * gauss * (t[i] - mu) * inv_var;
    }
    // mu = t_{k-1} + (0.5 - omega_{k-1}) / w_k * (t_k - t_{k-1}), k held fixed.
    const std::size_t k = profile.crossing[r];
    const double t_prev = k == 0 ? samples.near[r] : t[k - 1];
    const double omega_prev = k == 0 ? 0.0 : omega[k - 1];
    const double span_len = t[k] - t_prev;
    const double wk = w[k];
    const double d_omega_prev = -span_len / wk;
    const double d_wk = -(0.5 - omega_prev) * span_len / (wk * wk);
    for (std::size_t j = 0; j < k; ++j) b[j] = d_mu * d_omega_prev;
    b[k] = d_mu * d_wk;
    detail::weight_grads_to_sigma(delta, sigma, w, b, d_sigma);
  }

  if (!scale.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      d_sigma[i] *= scale[o + i];
      grads.d_rgb[o + i] *= scale[o + i];
    }
  }
}

// ---------------------------------------------------------------------------
// Batch API.

inline WeightProfile compute_weights(const SampleSet& samples, std::span<const double> sigma) {
  if (sigma.size() != samples.size()) throw InvalidArgument("compute_weights: density count mismatch");
  WeightProfile p;
  p.resize(samples.ray_count(), samples.per_ray);
  const std::size_t n = samples.per_ray;
  for (std::size_t r = 0; r < samples.ray_count(); ++r) {
    p.transmittance[r] = compute_weights(samples.ray_delta(r), sigma.subspan(r * n, n),
                                         std::span<double>(p.w.data() + r * n, n),
                                         std::span<double>(p.omega.data() + r * n, n));
  }
  return p;
}

/// Fills mu_t, surface_found and crossing of every ray in `profile`.
inline void median_depth(WeightProfile& profile, const SampleSet& samples) {
  const std::size_t n = samples.per_ray;
  for (std::size_t r = 0; r < samples.ray_count(); ++r) {
    const auto m = median_depth(samples.ray_t(r), std::span<const double>(profile.w.data() + r * n, n),
                                std::span<const double>(profile.omega.data() + r * n, n), samples.near[r]);
    profile.mu_t[r] = m.mu;
    profile.surface_found[r] = m.found ? 1 : 0;
    profile.crossing[r] = m.crossing;
  }
}

inline std::pair<RenderOutput, WeightProfile> render(const SampleSet& samples, const FieldOutputs& field,
                                                     const RendererConfig& cfg) {
  if (field.size() != samples.size()) throw InvalidArgument("render: field output count mismatch");
  WeightProfile profile;
  profile.resize(samples.ray_count(), samples.per_ray);
  RenderOutput out;
  out.resize(samples.ray_count());
  for (std::size_t r = 0; r < samples.ray_count(); ++r) render_ray(r, samples, field, cfg, profile, out);
  return {std::move(out), std::move(profile)};
}

inline RenderOutput render_baseline(const SampleSet& samples, const FieldOutputs& field) {
  return render(samples, field, RendererConfig{.kind = RendererKind::kBaseline}).first;
}

inline std::pair<RenderOutput, WeightProfile> render_single_surface(const SampleSet& samples,
                                                                    const FieldOutputs& field, double eta,
                                                                    double base,
                                                                    bool normalize_weights = false) {
  return render(samples, field,
                RendererConfig{.kind = RendererKind::kSingleSurface,
                               .eta = eta,
                               .base = base,
                               .normalize_weights = normalize_weights});
}

/// Per-sample gradients of a scalar loss given dL/drgb per ray.
inline SampleGradients renderer_backward(const SampleSet& samples, const FieldOutputs& field,
                                         const WeightProfile& profile, const RenderOutput& out,
                                         std::span<const Vec3> d_rgb_upstream, const RendererConfig& cfg,
                                         std::span<const double> dgs_scale = {}) {
  if (profile.ray_count() != samples.ray_count() || profile.w.size() != samples.size() ||
      out.size() != samples.ray_count())
    throw InvalidArgument("renderer_backward: no matching forward pass recorded");
  if (d_rgb_upstream.size() != samples.ray_count())
    throw InvalidArgument("renderer_backward: upstream gradient count mismatch");
  if (!dgs_scale.empty() && dgs_scale.size() != samples.size())
    throw InvalidArgument("renderer_backward: scale count mismatch");
  SampleGradients grads;
  grads.resize(samples.size());
  for (std::size_t r = 0; r < samples.ray_count(); ++r)
    backward_ray(r, samples, field, cfg, profile, out, d_rgb_upstream[r], dgs_scale, grads);
  return grads;
}

/// CSV dump of per-sample weights for inspection.
inline void write_weight_csv(std::ostream& os, const SampleSet& samples, const FieldOutputs& field,
                             const WeightProfile& profile) {
  os << "ray,sample,t,delta,sigma,w,omega,mu_t,w_hat,surface_found\n";
  const std::size_t n = samples.per_ray;
  for (std::size_t r = 0; r < samples.ray_count(); ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = r * n + i;
      os << r << ',' << i << ',' << samples.t[k] << ',' << samples.delta[k] << ',' << field.sigma[k] << ','
         << profile.w[k] << ',' << profile.omega[k] << ',' << profile.mu_t[r] << ',' << profile.w_hat[k]
         << ',' << int(profile.surface_found[r]) << '\n';
    }
  }
}

}  // namespace aqua
