// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "tawt/numerics.hpp"

namespace tawt {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter-block state. Moments stay empty for SGD.
struct OptimizerState {
  OptimizerConfig config;
  Vector m;
  Vector v;
  std::uint64_t step = 0;

  OptimizerState() = default;
  OptimizerState(OptimizerConfig cfg, std::size_t n) : config(cfg) {
    if (cfg.kind == OptimizerKind::adam) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
  }
};

inline void apply_update(std::span<double> params, std::span<const double> grads,
                         OptimizerState& state) {
  if (params.size() != grads.size()) throw DimensionError("apply_update: params/grads mismatch");
  const OptimizerConfig& c = state.config;
  ++state.step;
  if (c.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= c.lr * grads[i];
  } else {
    if (state.m.size() != params.size()) throw DimensionError("apply_update: moment shape mismatch");
    const double t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(c.beta1, t);
    const double corr2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
      state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = state.m[i] / corr1;
      const double vhat = state.v[i] / corr2;
      params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
  require_finite(params, "apply_update");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

}  // namespace tawt
