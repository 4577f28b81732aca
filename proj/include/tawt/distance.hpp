// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Plug-in estimate of the representation-based task distance:
//   dist = L0(phi_w) - L0(phi_0)
// where phi_w is learned on the weighted sources (then frozen, target head
// refit) and phi_0 is learned on a large target sample. Minima over heads are
// replaced by trained heads and population risks by held-out mean loss.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tawt/dataset.hpp"
#include "tawt/model.hpp"
#include "tawt/numerics.hpp"
#include "tawt/taskgen.hpp"
#include "tawt/training.hpp"
#include "tawt/weighting.hpp"

namespace tawt {

/// one_hot: the single source T_q. mix_with_target: sources {T_q, T_0} with
/// weights (1 - mix, mix).
enum class DistanceWeights { one_hot, mix_with_target };

struct DistanceConfig {
  TrainConfig train = [] {
    TrainConfig c;
    c.optimizer.lr = 3e-3;
    c.outer_rounds = 20;  // representation / oracle epochs
    c.min_steps_per_epoch = 10;
    return c;
  }();
  std::size_t head_epochs = 30;
  TaskSpec spec{};
  FamilySizes sizes{10000, 10000, 2000};  // head-fit target, source, eval
  std::size_t oracle_n = 10000;
  DistanceWeights weights_mode = DistanceWeights::one_hot;
  double mix = 0.5;
  std::vector<std::uint64_t> seeds{1};
  TrainConfig teacher = default_teacher_config();
};

struct RiskEstimate {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TaskDistanceEstimate {
  double flip_rate = 0.0;
  std::uint64_t seed = 0;
  double weighted_source_target_risk = 0.0;
  double oracle_target_risk = 0.0;
  double distance = 0.0;
  double aux_accuracy = 0.0;  // target accuracy of the transferred representation
  double oracle_accuracy = 0.0;
  bool negative = false;
  Vector weights;
  std::size_t head_epochs = 0;
  std::size_t eval_n = 0;
};

inline TaskDistanceEstimate make_distance_estimate(const RiskEstimate& weighted, const RiskEstimate& oracle) {
  TaskDistanceEstimate e;
  e.weighted_source_target_risk = weighted.loss;
  e.oracle_target_risk = oracle.loss;
  e.distance = weighted.loss - oracle.loss;
  e.aux_accuracy = weighted.accuracy;
  e.oracle_accuracy = oracle.accuracy;
  e.negative = e.distance < 0.0;
  return e;
}

/// Representation on sum_t w_t L_t over the sources, then only the target
/// head on target_train. `model_out`, if given, receives the final model.
inline RiskEstimate estimate_weighted_source_target_risk(std::span<const Dataset> sources,
                                                         const SimplexWeights& weights,
                                                         const Dataset& target_train, const Dataset& target_eval,
                                                         const DistanceConfig& cfg,
                                                         SharedModel* model_out = nullptr) {
  if (sources.empty()) throw ArgumentError("estimate_weighted_source_target_risk: no sources");
  if (weights.size() != sources.size()) throw ArgumentError("estimate_weighted_source_target_risk: weights/sources mismatch");
  detail::check_inputs(sources, target_train);
  if (target_eval.dim() != target_train.dim()) throw DimensionError("estimate_weighted_source_target_risk: eval dim mismatch");
  TrainConfig tc = cfg.train;
  tc.weighted = false;
  tc.granularity = Granularity::task;
  detail::Engine eng(tc, nullptr);
  std::vector<const Dataset*> data;
  for (const auto& s : sources) data.push_back(&s);
  const auto slots = detail::make_slots(data);
  eng.init_model(target_train.dim(), tc.hidden, slots, target_train.task_id(), target_train.n_classes());
  for (std::size_t e = 0; e < tc.outer_rounds; ++e) eng.run_steps(slots, &weights, eng.inner_steps(slots, weights), true);

  const std::array<detail::Slot, 1> head{detail::Slot{&target_train, target_train.task_id(), 0, 0}};
  eng.reset_optimizers();
  for (std::size_t e = 0; e < cfg.head_epochs; ++e)
    eng.run_steps(head, nullptr, eng.steps_per_epoch(target_train.size()), false, tc.head_lr);
  const EvalResult r = evaluate(eng.model, target_train.task_id(), target_eval);
  if (model_out) *model_out = std::move(eng.model);
  return {r.mean_loss, r.accuracy};
}

/// Whole model trained on a large target sample; its held-out loss stands in
/// for the optimal target risk.
inline RiskEstimate estimate_oracle_target_risk(const Dataset& target_train_large, const Dataset& target_eval,
                                                const DistanceConfig& cfg) {
  TrainConfig tc = cfg.train;
  tc.weighted = false;
  tc.granularity = Granularity::task;
  const auto [model, rec] = train_single_task(target_train_large, tc);
  const EvalResult r = evaluate(model, target_train_large.task_id(), target_eval);
  return {r.mean_loss, r.accuracy};
}

/// All grid points for one seed. The family (teachers, target draws) and the
/// oracle are shared across the grid.
inline std::vector<TaskDistanceEstimate> distance_replicate(std::span<const double> flip_grid, std::uint64_t seed,
                                                            const DistanceConfig& cfg) {
  if (flip_grid.empty()) throw ArgumentError("distance_curve: empty flip grid");
  std::vector<TaskSpec> specs;
  bool has_zero = false;
  for (double q : flip_grid) {
    if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("distance_curve: flip rate outside [0, 1]");
    TaskSpec s = cfg.spec;
    s.flip_rate = q;
    specs.push_back(s);
    if (flip_key(q) == 0) has_zero = true;
  }
  if (cfg.weights_mode == DistanceWeights::mix_with_target && !has_zero) {
    TaskSpec s = cfg.spec;
    s.flip_rate = 0.0;
    specs.push_back(s);
  }
  if (cfg.weights_mode == DistanceWeights::mix_with_target && !(cfg.mix >= 0.0 && cfg.mix <= 1.0))
    throw ArgumentError("distance_curve: mix must lie in [0, 1]");

  const TaskFamily fam = make_task_family(specs, cfg.sizes, seed, cfg.teacher);
  Rng oracle_rng(hash64(seed, tag64("oracle")));
  const Dataset oracle_train =
      sample_task_data(fam.target_teacher, cfg.oracle_n, cfg.spec.input_dim, oracle_rng, kTargetTaskId);
  DistanceConfig c = cfg;
  c.train.seed = hash64(seed, tag64("student"));
  const RiskEstimate oracle = estimate_oracle_target_risk(oracle_train, fam.target_eval, c);

  std::size_t zero_idx = 0;
  for (std::size_t i = 0; i < fam.flip_rates.size(); ++i)
    if (flip_key(fam.flip_rates[i]) == 0) zero_idx = i;

  std::vector<TaskDistanceEstimate> out;
  for (std::size_t i = 0; i < flip_grid.size(); ++i) {
    std::vector<Dataset> srcs{fam.sources[i]};
    Vector w{1.0};
    if (cfg.weights_mode == DistanceWeights::mix_with_target && i != zero_idx) {
      srcs.push_back(fam.sources[zero_idx]);
      w = {1.0 - cfg.mix, cfg.mix};
    }
    const SimplexWeights sw(w);
    const RiskEstimate wr = estimate_weighted_source_target_risk(srcs, sw, fam.target, fam.target_eval, c);
    TaskDistanceEstimate e = make_distance_estimate(wr, oracle);
    e.flip_rate = flip_grid[i];
    e.seed = seed;
    e.weights = w;
    e.head_epochs = cfg.head_epochs;
    e.eval_n = fam.target_eval.size();
    out.push_back(std::move(e));
  }
  return out;
}

/// One estimate per (grid point, seed), grid-major.
inline std::vector<TaskDistanceEstimate> distance_curve(std::span<const double> flip_grid, DistanceWeights mode,
                                                        const DistanceConfig& cfg) {
  if (cfg.seeds.empty()) throw ArgumentError("distance_curve: no seeds");
  DistanceConfig c = cfg;
  c.weights_mode = mode;
  std::vector<std::vector<TaskDistanceEstimate>> per_seed;
  for (std::uint64_t s : cfg.seeds) per_seed.push_back(distance_replicate(flip_grid, s, c));
  std::vector<TaskDistanceEstimate> out;
  for (std::size_t i = 0; i < flip_grid.size(); ++i)
    for (auto& r : per_seed) out.push_back(r[i]);
  return out;
}

/// Mean distance per grid point of a distance_curve result.
inline Vector mean_distance(std::span<const TaskDistanceEstimate> curve, std::span<const double> flip_grid) {
  Vector sum(flip_grid.size(), 0.0), cnt(flip_grid.size(), 0.0);
  for (const auto& e : curve)
    for (std::size_t i = 0; i < flip_grid.size(); ++i)
      if (flip_key(e.flip_rate) == flip_key(flip_grid[i])) {
        sum[i] += e.distance;
        cnt[i] += 1.0;
      }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = cnt[i] > 0.0 ? sum[i] / cnt[i] : 0.0;
  return sum;
}

}  // namespace tawt
