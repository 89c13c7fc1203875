#pragma once

// Photometric losses and per-sample gradient scaling.
//
// robust_mask labels 16x16 patches of residuals in four steps: a 3x3 box
// blur, a per-batch quantile threshold on the blurred residuals, an
// inlier-fraction vote over the 16x16 window centered on each 8x8 block,
// and broadcast of the block label back to its pixels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqua/error.hpp"
#include "aqua/geometry.hpp"

namespace aqua {

struct LossResult {
  double loss = 0.0;
  std::vector<Vec3> d_rgb;
};

/// Mean over rays of the squared RGB error, with its gradient w.r.t. pred.
inline LossResult l2_loss(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.size() != gt.size())
    throw InvalidArgument("l2_loss: prediction count " + std::to_string(pred.size()) +
                          " does not match target count " + std::to_string(gt.size()));
  LossResult out;
  out.d_rgb.resize(pred.size());
  if (pred.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 diff = pred[i] - gt[i];
    sum += diff.squaredNorm();
    out.d_rgb[i] = 2.0 * inv_n * diff;
  }
  out.loss = sum * inv_n;
  return out;
}

/// L2 loss with a fixed 0/1 weight per ray, normalized by the ray count.
inline LossResult masked_l2_loss(std::span<const Vec3> pred, std::span<const Vec3> gt,
                                 std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || mask.size() != pred.size())
    throw InvalidArgument("masked_l2_loss: shape mismatch");
  LossResult out;
  out.d_rgb.assign(pred.size(), Vec3::Zero());
  if (pred.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3 diff = pred[i] - gt[i];
    sum += diff.squaredNorm();
    out.d_rgb[i] = 2.0 * inv_n * diff;
  }
  out.loss = sum * inv_n;
  return out;
}

struct RobustConfig {
  bool enabled = false;
  double t_r = 0.6;
  double quantile = 0.5;
};

/// Residuals of whole 16x16 patches, patch-major then row-major.
struct PatchBatch {
  static constexpr int kPatch = 16;
  static constexpr int kBlock = 8;
  static constexpr std::size_t kPixels = kPatch * kPatch;

  std::vector<PixelId> origins;
  std::vector<double> residuals;
  std::vector<std::uint8_t> inlier_mask;

  std::size_t patch_count() const { return origins.size(); }
  std::size_t pixel_count() const { return origins.size() * kPixels; }
};

namespace detail {

inline double quantile_nearest_rank(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const double pos = std::ceil(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size()));
  const std::size_t rank = static_cast<std::size_t>(std::max(pos, 1.0)) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank), v.end());
  return v[rank];
}

}  // namespace detail

/// Per-pixel inlier weights in {0, 1}; also stored in patches.inlier_mask.
inline std::vector<std::uint8_t> robust_mask(PatchBatch& patches, const RobustConfig& cfg = {}) {
  constexpr int P = PatchBatch::kPatch;
  constexpr int B = PatchBatch::kBlock;
  const std::size_t count = patches.patch_count();
  if (count == 0 || patches.residuals.size() != patches.pixel_count())
    throw InvalidArgument("robust_mask: expected " + std::to_string(P) + "x" + std::to_string(P) +
                          " residual grids, got " + std::to_string(patches.residuals.size()) +
                          " values for " + std::to_string(count) + " patches");

  // 1. 3x3 box blur with edge replication.
  std::vector<double> blurred(patches.residuals.size());
  for (std::size_t p = 0; p < count; ++p) {
    const double* src = patches.residuals.data() + p * PatchBatch::kPixels;
    double* dst = blurred.data() + p * PatchBatch::kPixels;
    for (int r = 0; r < P; ++r) {
      for (int c = 0; c < P; ++c) {
        double acc = 0.0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            acc += src[std::clamp(r + dr, 0, P - 1) * P + std::clamp(c + dc, 0, P - 1)];
        dst[r * P + c] = acc / 9.0;
      }
    }
  }

  // 2. Pixel labels against the batch quantile; ties count as inliers.
  const double threshold = detail::quantile_nearest_rank(blurred, cfg.quantile);
  std::vector<std::uint8_t> label(blurred.size());
  for (std::size_t i = 0; i < blurred.size(); ++i) label[i] = blurred[i] <= threshold ? 1 : 0;

  // 3-4. Each 8x8 block votes over the 16x16 window centered on it, clipped to the patch.
  patches.inlier_mask.assign(blurred.size(), 0);
  for (std::size_t p = 0; p < count; ++p) {
    const std::uint8_t* lab = label.data() + p * PatchBatch::kPixels;
    std::uint8_t* out = patches.inlier_mask.data() + p * PatchBatch::kPixels;
    for (int br = 0; br < P; br += B) {
      for (int bc = 0; bc < P; bc += B) {
        const int r0 = std::max(0, br - B / 2), r1 = std::min(P, br + B + B / 2);
        const int c0 = std::max(0, bc - B / 2), c1 = std::min(P, bc + B + B / 2);
        int inliers = 0;
        for (int r = r0; r < r1; ++r)
          for (int c = c0; c < c1; ++c) inliers += lab[r * P + c];
        const double frac = static_cast<double>(inliers) / ((r1 - r0) * (c1 - c0));
        const std::uint8_t keep = frac >= cfg.t_r ? 1 : 0;
        for (int r = br; r < br + B; ++r)
          for (int c = bc; c < bc + B; ++c) out[r * P + c] = keep;
      }
    }
  }
  return patches.inlier_mask;
}

/// Squared error weighted by a frozen per-ray inlier mask, normalized by
/// the total ray count. The mask is recomputed from the current residuals
/// and never differentiated through.
inline LossResult robust_loss(std::span<const Vec3> pred, std::span<const Vec3> gt, PatchBatch& patches,
                              const RobustConfig& cfg = {}) {
  if (pred.size() != gt.size()) throw InvalidArgument("robust_loss: prediction/target count mismatch");
  if (patches.patch_count() == 0 || patches.pixel_count() != pred.size())
    throw InvalidArgument("robust_loss: requires patch-sampled rays (" + std::to_string(pred.size()) +
                          " rays, " + std::to_string(patches.patch_count()) + " patches)");
  patches.residuals.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) patches.residuals[i] = (gt[i] - pred[i]).squaredNorm();
  const auto mask = robust_mask(patches, cfg);
  return masked_l2_loss(pred, gt, mask);
}

struct DgsConfig {
  bool enabled = false;
  double threshold = 0.02;  // T_h, world units
  /// Camera center shared by the batch. When absent each sample is measured
  /// from the origin of its own ray.
  std::optional<Vec3> camera_origin;
  /// Forces the gate open (plain gradient scaling without the depth test).
  bool force_gate = false;
};

/// Per-sample gradient multipliers. With mean camera distance above the
/// threshold each sample gets min(1, |c - p|^2), otherwise 1.
inline std::vector<double> dgs_scale(const SampleSet& samples, const DgsConfig& cfg) {
  if (!(cfg.threshold > 0.0)) throw InvalidArgument("dgs_scale: threshold must be positive");
  std::vector<double> dist(samples.size());
  double total = 0.0;
  for (std::size_t r = 0; r < samples.ray_count(); ++r) {
    const Vec3& c = cfg.camera_origin ? *cfg.camera_origin : samples.origins[r];
    for (std::size_t i = 0; i < samples.per_ray; ++i) {
      const std::size_t k = r * samples.per_ray + i;
      dist[k] = (c - samples.positions[k]).norm();
      total += dist[k];
    }
  }
  std::vector<double> scale(samples.size(), 1.0);
  if (samples.size() == 0) return scale;
  const double mean = total / static_cast<double>(samples.size());
  if (!cfg.force_gate && !(mean > cfg.threshold)) return scale;
  for (std::size_t k = 0; k < scale.size(); ++k) scale[k] = std::min(1.0, dist[k] * dist[k]);
  return scale;
}

}  // namespace aqua
