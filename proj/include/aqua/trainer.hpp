#pragma once

// Optimization loop: batch sampling, forward render, loss, optionally
// depth-scaled backward, RAdam step and validation-PSNR early stopping.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "aqua/dataset.hpp"
#include "aqua/error.hpp"
#include "aqua/losses.hpp"
#include "aqua/metrics.hpp"
#include "aqua/model.hpp"
#include "aqua/optimizer.hpp"
#include "aqua/parallel.hpp"

namespace aqua {

struct TrainConfig {
  RendererConfig renderer;
  RobustConfig robust;
  DgsConfig dgs;
  RAdamHyper optim;
  SamplingConfig sampling;
  int early_stop_interval = 2000;
  /// Rays per batch. With the robust loss the batch is made of whole
  /// 16x16 patches, batch / 256 of them.
  std::size_t batch = 4096;
  int iterations = 20000;
  std::uint64_t seed = 0;
  int threads = 1;
  GridResolution grid{48, 48, 48};
  Aabb bounds{Vec3::Constant(-1.05), Vec3::Constant(1.05)};
  Vec3 medium_color = kDefaultMediumColor;
  double initial_density = 0.01;
  int log_every = 100;

  void validate() const {
    if (batch == 0) throw InvalidArgument("train.batch must be positive");
    if (robust.enabled && batch < PatchBatch::kPixels)
      throw InvalidArgument("train.batch must hold at least one 16x16 patch when the robust loss is on");
    if (iterations < 0) throw InvalidArgument("train.iterations must be non-negative");
    if (early_stop_interval <= 0) throw InvalidArgument("early_stop.interval must be positive");
    if (!(renderer.eta > 0.0)) throw InvalidArgument("renderer.eta must be positive");
    if (!(renderer.base >= 0.0)) throw InvalidArgument("renderer.base must be non-negative");
    if (!(dgs.threshold > 0.0)) throw InvalidArgument("dgs.t_h must be positive");
  }

  std::size_t patch_count() const { return batch / PatchBatch::kPixels; }
};

inline Model initial_model(const TrainConfig& cfg) {
  return Model{VoxelField::initialized(cfg.grid, cfg.bounds, cfg.medium_color, cfg.initial_density), cfg.renderer,
               cfg.sampling, 0, -std::numeric_limits<double>::infinity()};
}

struct TrainingBatch {
  RayBatch rays;
  std::vector<Vec3> target;
  PatchBatch patches;  // populated iff the robust loss is on
  std::string descriptor;
};

/// Random training rays (uniform over all training pixels), or random whole
/// patches when the robust loss is enabled. Rays are jittered inside pixels.
inline TrainingBatch sample_batch(const Dataset& ds, const std::vector<int>& train, const TrainConfig& cfg,
                                  const RayRange& range, std::uint64_t seed) {
  if (train.empty()) throw InvalidArgument("dataset has no training frames");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  TrainingBatch b;
  auto add = [&](const Frame& f, int row, int col) {
    const double u = unit(rng), v = unit(rng);
    const Vec3 d = f.camera.direction_at(col + u, row + v);
    const auto [tn, tf] = detail::clip_range(range, f.camera.position, d);
    b.rays.push_back(f.camera.position, d, tn, tf, {f.index, row, col});
    b.target.push_back(f.image.at(row, col));
  };
  if (cfg.robust.enabled) {
    const std::size_t n = cfg.patch_count();
    b.rays.reserve(n * PatchBatch::kPixels);
    for (std::size_t p = 0; p < n; ++p) {
      const Frame& f = ds.frames[train[pick(rng)]];
      if (f.image.width < PatchBatch::kPatch || f.image.height < PatchBatch::kPatch)
        throw InvalidArgument("images are smaller than a 16x16 patch");
      std::uniform_int_distribution<int> rows(0, f.image.height - PatchBatch::kPatch);
      std::uniform_int_distribution<int> cols(0, f.image.width - PatchBatch::kPatch);
      const int r0 = rows(rng), c0 = cols(rng);
      b.patches.origins.push_back({f.index, r0, c0});
      for (int r = 0; r < PatchBatch::kPatch; ++r)
        for (int c = 0; c < PatchBatch::kPatch; ++c) add(f, r0 + r, c0 + c);
    }
    b.descriptor = std::to_string(n) + " patches, first at frame " + std::to_string(b.patches.origins[0].image) +
                   " (" + std::to_string(b.patches.origins[0].row) + "," + std::to_string(b.patches.origins[0].col) +
                   ")";
  } else {
    b.rays.reserve(cfg.batch);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      const Frame& f = ds.frames[train[pick(rng)]];
      std::uniform_int_distribution<int> rows(0, f.image.height - 1);
      std::uniform_int_distribution<int> cols(0, f.image.width - 1);
      const int r = rows(rng);
      add(f, r, cols(rng));
    }
    b.descriptor = std::to_string(cfg.batch) + " random rays, seed " + std::to_string(seed);
  }
  return b;
}

/// Per-worker gradient buffers reused across iterations.
struct GradientWorkspace {
  std::vector<GradientBuffer> workers;
  GradientBuffer total;
};

struct BatchResult {
  double loss = 0.0;
  RenderedBatch rendered;
  std::vector<double> scale;  // D-GS multipliers, empty when disabled
};

/// Forward, loss and backward for one batch. Parameter gradients are left
/// in `ws.total`.
inline BatchResult compute_batch_gradients(const Model& model, TrainingBatch& batch, const TrainConfig& cfg,
                                           std::uint64_t seed, GradientWorkspace& ws) {
  const int threads = resolve_threads(cfg.threads);
  BatchResult res;
  res.rendered = render_rays(model, batch.rays, true, seed, threads);
  const auto& rb = res.rendered;

  const LossResult loss = cfg.robust.enabled ? robust_loss(rb.output.rgb, batch.target, batch.patches, cfg.robust)
                                             : l2_loss(rb.output.rgb, batch.target);
  res.loss = loss.loss;
  if (!std::isfinite(res.loss))
    throw NumericalFailure("non-finite loss on batch [" + batch.descriptor + "]");
  if (cfg.dgs.enabled) res.scale = dgs_scale(rb.samples, cfg.dgs);

  const std::size_t V = model.field.vertex_count();
  if (ws.total.vertices != V) ws.total = GradientBuffer(V);
  ws.total.zero();
  if (threads > 1 && ws.workers.size() != static_cast<std::size_t>(threads))
    ws.workers.assign(threads, GradientBuffer(V));

  SampleGradients sg;
  sg.resize(rb.samples.size());
  parallel_chunks(rb.samples.ray_count(), threads, [&](std::size_t r0, std::size_t r1, int worker) {
    GradientBuffer& g = threads > 1 ? ws.workers[worker] : ws.total;
    if (threads > 1) g.zero();
    for (std::size_t r = r0; r < r1; ++r)
      backward_ray(r, rb.samples, rb.field, model.renderer, rb.profile, rb.output, loss.d_rgb[r], res.scale, sg);
    const std::size_t n = rb.samples.per_ray;
    model.field.backward_range(rb.samples.positions, sg.d_sigma, sg.d_rgb, r0 * n, r1 * n, g);
  });
  if (threads > 1) {
    // Reduce in fixed worker order, split over parameter ranges.
    parallel_chunks(ws.total.values.size(), threads, [&](std::size_t b, std::size_t e, int) {
      for (const auto& w : ws.workers)
        for (std::size_t i = b; i < e; ++i) ws.total.values[i] += w.values[i];
    });
  }
  return res;
}

struct ValidationCheck {
  int iteration = 0;
  double psnr = 0.0;
};

struct TrainLog {
  std::vector<int> iterations;
  std::vector<double> loss;
  std::vector<ValidationCheck> checks;
  std::vector<std::pair<int, double>> seconds_per_100;

  void write_csv(std::ostream& os) const {
    os << "iteration,loss,validation_psnr,seconds_per_100\n";
    std::size_t c = 0, s = 0;
    for (std::size_t i = 0; i < iterations.size(); ++i) {
      const int it = iterations[i];
      os << it << ',' << format_metric(loss[i]) << ',';
      if (c < checks.size() && checks[c].iteration == it) os << format_metric(checks[c++].psnr);
      os << ',';
      if (s < seconds_per_100.size() && seconds_per_100[s].first == it) os << seconds_per_100[s++].second;
      os << '\n';
    }
  }
};

struct TrainHooks {
  /// Validation score for the current parameters; defaults to the mean PSNR
  /// over validation frames.
  std::function<double(const Model&, int iteration)> validate;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  Model model;  // best checkpoint
  TrainLog log;
  bool halted = false;
  int best_iteration = 0;
  int iterations_run = 0;
};

inline double validation_psnr(const Model& model, const Dataset& ds, int threads) {
  const auto val = ds.indices(Split::kVal);
  double sum = 0.0;
  for (int i : val) sum += psnr(render_image(model, ds.frames[i].camera, threads), ds.frames[i].image);
  return sum / static_cast<double>(val.size());
}

inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, const TrainHooks& hooks = {}) {
  cfg.validate();
  const auto train_idx = ds.indices(Split::kTrain);
  if (train_idx.empty()) throw InvalidArgument("dataset has no training frames");
  if (ds.indices(Split::kVal).empty() && !hooks.validate) throw InvalidArgument("dataset has no validation frames");
  const int threads = resolve_threads(cfg.threads);

  TrainResult result;
  Model model = initial_model(cfg);
  result.model = model;
  if (cfg.iterations == 0) return result;

  auto validate = [&](const Model& m, int it) {
    return hooks.validate ? hooks.validate(m, it) : validation_psnr(m, ds, threads);
  };

  RAdamState opt{cfg.optim, 0, {}, {}};
  EarlyStopState stopper;
  stopper.interval = cfg.early_stop_interval;
  GradientWorkspace ws;
  const RayRange range = model.ray_range();
  auto clock_start = std::chrono::steady_clock::now();

  auto record_best = [&](int it, double psnr_value) {
    result.model = model;
    result.model.iteration = it;
    result.model.validation_psnr = psnr_value;
    result.best_iteration = it;
  };

  for (int it = 1; it <= cfg.iterations; ++it) {
    const std::uint64_t iter_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(it));
    TrainingBatch batch = sample_batch(ds, train_idx, cfg, range, derive_seed(iter_seed, 1));
    BatchResult br;
    try {
      br = compute_batch_gradients(model, batch, cfg, derive_seed(iter_seed, 2), ws);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("iteration " + std::to_string(it) + ": " + e.what());
    }

    const ParamBlock blocks[2] = {{"density", model.field.density_params(), ws.total.d_density()},
                                  {"color", model.field.color_params(), ws.total.d_color()}};
    radam_step(opt, blocks);
    result.log.iterations.push_back(it);
    result.log.loss.push_back(br.loss);
    result.iterations_run = it;

    if (it % 100 == 0) {
      const auto now = std::chrono::steady_clock::now();
      result.log.seconds_per_100.emplace_back(it, std::chrono::duration<double>(now - clock_start).count());
      clock_start = now;
    }

    const bool check = it % cfg.early_stop_interval == 0;
    const bool last = it == cfg.iterations;
    if (check || last) {
      const double v = validate(model, it);
      result.log.checks.push_back({it, v});
      if (hooks.progress)
        *hooks.progress << "iter " << it << " validation psnr " << format_metric(v) << " dB\n" << std::flush;
      if (check) {
        if (early_stop_check(stopper, it, v)) {
          result.halted = true;
          break;
        }
        if (stopper.best_iteration == it) record_best(it, v);
      } else if (stopper.best_iteration < 0 || v > stopper.best_psnr) {
        // Final partial interval: keep whichever parameters validate best.
        record_best(it, v);
      }
    }
    if (hooks.progress && cfg.log_every > 0 && it % cfg.log_every == 0)
      *hooks.progress << "iter " << it << " loss " << std::setprecision(6) << br.loss << '\n' << std::flush;
  }
  return result;
}

}  // namespace aqua
