#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "llab/errors.hpp"
#include "llab/tensor.hpp"

namespace llab {

enum class ScheduleKind { constant, cyclic_triangular };

/// Learning-rate schedule. The cyclic kind ramps base -> max over half a
/// cycle and back down, linearly.
struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 3e-4;
  double max_lr = 3e-4;
  std::size_t cycle_length = 200;

  static LrSchedule constant(double lr) { return {ScheduleKind::constant, lr, lr, 1}; }
  static LrSchedule cyclic(double base, double max, std::size_t cycle) {
    if (base <= 0 || max <= 0 || cycle == 0)
      throw ConfigError("cyclic schedule needs positive rates and cycle length");
    return {ScheduleKind::cyclic_triangular, base, max, cycle};
  }
};

inline double lr_at(const LrSchedule& s, std::size_t step) {
  if (s.kind == ScheduleKind::constant) return s.base_lr;
  const std::size_t pos = step % s.cycle_length;
  const double half = static_cast<double>(s.cycle_length) / 2.0;
  const double frac = pos <= half ? static_cast<double>(pos) / half
                                  : (static_cast<double>(s.cycle_length - pos)) / half;
  return s.base_lr + (s.max_lr - s.base_lr) * frac;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter first/second moment state plus the shared step counter.
struct OptimizerState {
  AdamConfig cfg;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long t = 0;

  static OptimizerState init(const std::vector<Tensor>& params,
                             AdamConfig cfg = {}) {
    OptimizerState s;
    s.cfg = cfg;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), 0.0);
      s.v.emplace_back(p.size(), 0.0);
    }
    return s;
  }
};

/// One Adam update with bias correction. Consumes and clears the gradients.
/// Rejects frozen (non-grad) parameters and non-finite gradients.
inline void adam_step(std::vector<Tensor>& params, OptimizerState& state,
                      double lr) {
  if (lr <= 0.0) throw ConfigError("adam_step: lr must be positive");
  if (params.size() != state.m.size())
    throw ShapeError("adam_step: state does not match parameter list");
  state.t += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    if (!p.requires_grad())
      throw Error("adam_step: parameter " + std::to_string(pi) +
                  " is frozen (requires_grad=false)");
    const auto& g = p.grad();
    if (state.m[pi].size() != g.size())
      throw ShapeError("adam_step: moment/parameter shape mismatch");
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    auto& val = p.mutable_values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi))
        throw NumericError("adam_step: non-finite gradient at parameter " +
                           std::to_string(pi));
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
    p.zero_grad();
  }
}

}  // namespace llab
