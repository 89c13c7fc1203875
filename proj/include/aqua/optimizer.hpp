#pragma once

// Rectified Adam and the validation-PSNR early-stopping controller.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aqua/error.hpp"

namespace aqua {

struct RAdamHyper {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RAdamState {
  RAdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// A named view of parameters and their gradients. All blocks passed to
/// one radam_step share a single moment buffer laid out in block order.
struct ParamBlock {
  std::string_view name;
  std::span<double> params;
  std::span<const double> grads;
};

/// Length of the approximated simple moving average after `step` updates.
inline double radam_rho(double beta2, std::uint64_t step) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(step));
  return rho_inf - 2.0 * static_cast<double>(step) * b2t / (1.0 - b2t);
}

/// True when the variance of the adaptive learning rate is tractable and
/// the rectified update is used.
inline bool radam_rectified(double beta2, std::uint64_t step) { return radam_rho(beta2, step) > 4.0; }

inline void radam_step(RAdamState& state, std::span<const ParamBlock> blocks) {
  std::size_t total = 0;
  for (const auto& b : blocks) {
    if (b.params.size() != b.grads.size())
      throw InvalidArgument("radam_step: block '" + std::string(b.name) + "' has mismatched gradient size");
    for (std::size_t i = 0; i < b.grads.size(); ++i)
      if (!std::isfinite(b.grads[i]))
        throw NumericalFailure("radam_step: non-finite gradient in block '" + std::string(b.name) +
                               "' at element " + std::to_string(i));
    total += b.params.size();
  }
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total) throw InvalidArgument("radam_step: parameter count changed between steps");

  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  const double rho_inf = 2.0 / (1.0 - h.beta2) - 1.0;
  const double rho = radam_rho(h.beta2, state.step);
  const bool rectified = rho > 4.0;
  const double rect =
      rectified ? std::sqrt(((rho - 4.0) * (rho - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                : 0.0;

  std::size_t off = 0;
  for (const auto& b : blocks) {
    double* m = state.m.data() + off;
    double* v = state.v.data() + off;
    for (std::size_t i = 0; i < b.params.size(); ++i) {
      const double g = b.grads[i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      if (rectified) {
        const double v_hat = std::sqrt(v[i] / bc2);
        b.params[i] -= h.lr * rect * m_hat / (v_hat + h.eps);
      } else {
        b.params[i] -= h.lr * m_hat;
      }
    }
    off += b.params.size();
  }
}

inline void radam_step(RAdamState& state, std::span<double> params, std::span<const double> grads) {
  const ParamBlock block{"params", params, grads};
  radam_step(state, std::span<const ParamBlock>(&block, 1));
}

struct EarlyStopState {
  int interval = 2000;
  double best_psnr = -std::numeric_limits<double>::infinity();
  int best_iteration = -1;
  int checks = 0;
  bool halted = false;
};

/// Returns true when training should halt: the validation PSNR fell below
/// the best seen so far. Otherwise records a new best when it improves.
inline bool early_stop_check(EarlyStopState& state, int iteration, double validation_psnr) {
  if (state.interval <= 0) throw InvalidArgument("early stopping interval must be positive");
  state.checks += 1;
  if (state.best_iteration >= 0 && validation_psnr < state.best_psnr) {
    state.halted = true;
    return true;
  }
  if (state.best_iteration < 0 || validation_psnr > state.best_psnr) {
    state.best_psnr = validation_psnr;
    state.best_iteration = iteration;
  }
  return false;
}

}  // namespace aqua
