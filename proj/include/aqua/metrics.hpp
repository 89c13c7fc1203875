#pragma once

// PSNR / SSIM on [0,1] RGB images, optionally restricted to a pixel mask,
// and per-run evaluation reports.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "aqua/dataset.hpp"
#include "aqua/error.hpp"
#include "aqua/image.hpp"
#include "aqua/model.hpp"

namespace aqua {

using Mask = std::vector<std::uint8_t>;

namespace detail {
inline void check_same_size(const Image& a, const Image& b, const Mask* mask) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidArgument("image dimensions differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                          " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  if (mask && mask->size() != a.size()) throw InvalidArgument("mask size does not match image");
}
}  // namespace detail

/// 10 log10(1 / MSE) over masked pixels; +inf for an exact match.
inline double psnr(const Image& pred, const Image& gt, const Mask* mask = nullptr) {
  detail::check_same_size(pred, gt, mask);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    sum += (pred.pixels[i] - gt.pixels[i]).squaredNorm();
    count += 3;
  }
  if (count == 0) throw InvalidArgument("psnr: mask selects no pixels");
  const double mse = sum / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) evaluated at
/// every center where the window fits, averaged over channels and over
/// centers selected by the mask.
inline double ssim(const Image& pred, const Image& gt, const Mask* mask = nullptr) {
  detail::check_same_size(pred, gt, mask);
  constexpr int kWin = 11;
  constexpr int kHalf = kWin / 2;
  constexpr double kSigma = 1.5;
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  if (pred.width < kWin || pred.height < kWin) throw InvalidArgument("ssim: image smaller than the 11x11 window");

  std::array<double, kWin> g{};
  double norm = 0.0;
  for (int i = 0; i < kWin; ++i) {
    g[i] = std::exp(-0.5 * (i - kHalf) * (i - kHalf) / (kSigma * kSigma));
    norm += g[i];
  }
  for (auto& v : g) v /= norm;

  double total = 0.0;
  std::size_t centers = 0;
  for (int r = kHalf; r < pred.height - kHalf; ++r) {
    for (int c = kHalf; c < pred.width - kHalf; ++c) {
      if (mask && !(*mask)[static_cast<std::size_t>(r) * pred.width + c]) continue;
      double s = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dr = -kHalf; dr <= kHalf; ++dr) {
          for (int dc = -kHalf; dc <= kHalf; ++dc) {
            const double w = g[dr + kHalf] * g[dc + kHalf];
            const double x = pred.at(r + dr, c + dc)[ch];
            const double y = gt.at(r + dr, c + dc)[ch];
            mx += w * x;
            my += w * y;
            sxx += w * x * x;
            syy += w * y * y;
            sxy += w * x * y;
          }
        }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cxy = sxy - mx * my;
        s += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      }
      total += s / 3.0;
      ++centers;
    }
  }
  if (centers == 0) throw InvalidArgument("ssim: mask selects no window centers");
  return total / static_cast<double>(centers);
}

/// Size of the largest 4-connected cluster of pixels whose RGB distance
/// between `a` and `b` exceeds `threshold`.
inline std::size_t largest_difference_cluster(const Image& a, const Image& b, double threshold) {
  detail::check_same_size(a, b, nullptr);
  const int W = a.width, H = a.height;
  std::vector<std::uint8_t> hot(a.size()), seen(a.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) hot[i] = (a.pixels[i] - b.pixels[i]).norm() > threshold;
  std::size_t best = 0;
  std::queue<int> q;
  for (int start = 0; start < static_cast<int>(a.size()); ++start) {
    if (!hot[start] || seen[start]) continue;
    std::size_t size = 0;
    seen[start] = 1;
    q.push(start);
    while (!q.empty()) {
      const int k = q.front();
      q.pop();
      ++size;
      const int r = k / W, c = k % W;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= H || n[1] >= W) continue;
        const int j = n[0] * W + n[1];
        if (hot[j] && !seen[j]) {
          seen[j] = 1;
          q.push(j);
        }
      }
    }
    best = std::max(best, size);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Reports.

struct FrameMetrics {
  std::string frame_id;
  double psnr_full = 0.0;
  double psnr_static = 0.0;
  double ssim_full = 0.0;
  double ssim_static = 0.0;
};

struct MetricReport {
  std::string renderer;
  std::string config_fingerprint;
  std::vector<FrameMetrics> frames;
  FrameMetrics mean;
  std::vector<Image> renders;  // one per evaluated frame, same order
};

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline void write_report_header(std::ostream& os, bool with_variant) {
  if (with_variant) os << "variant,";
  os << "frame_id,renderer,psnr_full,psnr_static,ssim_full,ssim_static\n";
}

inline void write_report_row(std::ostream& os, const std::string& renderer, const FrameMetrics& m,
                             const std::string& variant = "") {
  if (!variant.empty()) os << variant << ',';
  os << m.frame_id << ',' << renderer << ',' << format_metric(m.psnr_full) << ',' << format_metric(m.psnr_static)
     << ',' << format_metric(m.ssim_full) << ',' << format_metric(m.ssim_static) << '\n';
}

inline void write_report_csv(std::ostream& os, const MetricReport& rep, const std::string& variant = "") {
  write_report_header(os, !variant.empty());
  for (const auto& f : rep.frames) write_report_row(os, rep.renderer, f, variant);
  write_report_row(os, rep.renderer, rep.mean, variant);
}

inline FrameMetrics frame_metrics(const std::string& id, const Image& render, const Frame& frame) {
  FrameMetrics m;
  m.frame_id = id;
  m.psnr_full = psnr(render, frame.image);
  m.psnr_static = psnr(render, frame.image, &frame.static_mask);
  m.ssim_full = ssim(render, frame.image);
  m.ssim_static = ssim(render, frame.image, &frame.static_mask);
  return m;
}

inline FrameMetrics mean_metrics(const std::vector<FrameMetrics>& rows) {
  FrameMetrics m;
  m.frame_id = "mean";
  for (const auto& r : rows) {
    m.psnr_full += r.psnr_full;
    m.psnr_static += r.psnr_static;
    m.ssim_full += r.ssim_full;
    m.ssim_static += r.ssim_static;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  m.psnr_full /= n;
  m.psnr_static /= n;
  m.ssim_full /= n;
  m.ssim_static /= n;
  return m;
}

/// Renders every test frame with `renderer` and scores it against the
/// observed frame, over all pixels and over distractor-free pixels.
inline MetricReport evaluate_run(const Model& model, const Dataset& dataset, const RendererConfig& renderer,
                                 int threads = 1) {
  const auto test = dataset.indices(Split::kTest);
  if (test.empty()) throw MissingInput("dataset has no test frames");
  std::vector<int> missing;
  for (int i : test)
    if (dataset.frames[i].image.size() == 0) missing.push_back(dataset.frames[i].index);
  if (!missing.empty()) {
    std::string list;
    for (int i : missing) list += (list.empty() ? "" : ", ") + std::to_string(i);
    throw MissingInput("test frames without images: " + list);
  }
  Model m = model;
  m.renderer = renderer;
  MetricReport rep;
  rep.renderer = std::string(to_string(renderer.kind));
  for (int i : test) {
    const Frame& f = dataset.frames[i];
    Image img = render_image(m, f.camera, threads);
    rep.frames.push_back(frame_metrics(std::to_string(f.index), img, f));
    rep.renders.push_back(std::move(img));
  }
  rep.mean = mean_metrics(rep.frames);
  return rep;
}

}  // namespace aqua
