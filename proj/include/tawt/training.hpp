// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Cross-task learning paradigms (single-task, pre-train + fine-tune, joint,
// normalized joint) and their target-aware weighted versions.
//
// One engine runs every paradigm. A weighted run differs from its unweighted
// counterpart only in the estimate + mirror-descent step that follows each
// outer round, and that step draws from its own random stream, so with
// eta = 0 both runs produce bit-identical models.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tawt/dataset.hpp"
#include "tawt/model.hpp"
#include "tawt/numerics.hpp"
#include "tawt/optimizer.hpp"
#include "tawt/weighting.hpp"

namespace tawt {

enum class Paradigm { single, pretrain, joint, normalized_joint };
enum class Granularity { task, sample };
enum class EstimatorKind { cosine, identity_hessian, exact_hessian };
enum class FinetuneMode { full, frozen };
/// direct: sum_t w_t * mean_loss_t. times_tasks: the same scaled by the number
/// of weighted tasks, so uniform weights give unit scale per task.
enum class LossScaling { direct, times_tasks };

struct TrainConfig {
  Paradigm paradigm = Paradigm::joint;
  bool weighted = false;
  Granularity granularity = Granularity::task;
  EstimatorKind estimator = EstimatorKind::cosine;
  double c = 1.0;
  double eta = 1.0;
  std::size_t subset_size = kDefaultGradientSubset;
  std::size_t inner_steps = 0;  // per outer round; 0 = one epoch over the largest weighted task
  std::size_t outer_rounds = 20;
  std::size_t weight_update_period = 0;  // outer rounds between mirror steps; 0 = 1 (task) or 5 (sample)
  std::size_t finetune_epochs = 20;
  FinetuneMode finetune = FinetuneMode::full;
  std::size_t head_steps = 0;  // target-head steps per round in pre-training; 0 = one epoch
  std::optional<double> head_lr;
  OptimizerConfig optimizer{};
  std::size_t hidden = 256;
  std::size_t batch_size = 100;
  std::size_t min_steps_per_epoch = 1;
  std::uint64_t seed = 0;
  std::optional<double> sample_split;
  double identity_hessian_scale = kDefaultIdentityHessianScale;
  std::optional<double> weight_floor;
  LossScaling loss_scaling = LossScaling::direct;
  HessianOptions hessian{};

  void validate() const {
    if (hidden == 0 || batch_size == 0 || outer_rounds == 0 || subset_size == 0 ||
        min_steps_per_epoch == 0)
      throw ArgumentError("TrainConfig: counts must be positive");
    if (!(c > 0.0)) throw ArgumentError("TrainConfig: c must be positive");
    if (!(eta >= 0.0)) throw ArgumentError("TrainConfig: eta must be >= 0");
    if (!(optimizer.lr >= 0.0)) throw ArgumentError("TrainConfig: lr must be >= 0");
    if (sample_split && !(*sample_split > 0.0 && *sample_split < 1.0))
      throw ArgumentError("TrainConfig: sample_split must lie in (0, 1)");
    if (weight_floor && !(*weight_floor > 0.0 && *weight_floor < 1.0))
      throw ArgumentError("TrainConfig: weight_floor must lie in (0, 1)");
  }

  std::size_t update_period() const {
    if (weight_update_period > 0) return weight_update_period;
    return granularity == Granularity::sample ? 5 : 1;
  }
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase;  // "train", "pretrain", "finetune", "refit"
  std::vector<std::pair<std::uint64_t, double>> task_losses;  // weighted mean batch loss
  double target_acc = 0.0;
  double target_loss = 0.0;
};

struct WeightSnapshot {
  std::size_t step = 0;
  Vector weights;  // per task; for sample granularity the total mass of each task
};

struct RunRecord {
  TrainConfig config;
  std::vector<std::uint64_t> weight_task_ids;  // column order of the weight snapshots
  std::vector<EpochRecord> epochs;
  std::vector<WeightSnapshot> weights;
  bool weight_floor_active = false;
  std::size_t floor_hits = 0;
  double final_target_acc = 0.0;
  double final_target_loss = 0.0;
  double wall_seconds = 0.0;
  std::string checkpoint;  // set by callers that persist the model
};

inline EvalResult evaluate(const SharedModel& m, std::uint64_t task_id, const Dataset& data) {
  const Head& h = m.head(task_id);
  if (data.empty()) throw EmptyBatchError("evaluate: empty data");
  if (data.dim() != m.input_dim) throw DimensionError("evaluate: feature dim mismatch");
  Workspace ws;
  ws.resize(m.hidden, h.n_classes);
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward_into(m, h, data.x(i), ws);
    if (argmax(ws.logits) == data.y(i)) ++correct;
    softmax_inplace(ws.logits);
    loss += log_loss(ws.logits[data.y(i)]);
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, loss / n};
}

/// Disjoint partition (B1, B2) with |B1| = round(fraction * n), rows kept in
/// their original order inside each part.
inline std::pair<Dataset, Dataset> split_target(const Dataset& target, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ArgumentError("split_target: fraction must lie in (0, 1)");
  const std::size_t n = target.size();
  const auto n1 = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  if (n1 == 0 || n1 >= n) throw ArgumentError("split_target: a part would be empty");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(std::span(perm));
  std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n1));
  std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(n1), perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {target.subset(a), target.subset(b)};
}

namespace detail {

/// Endless reshuffled pass over one dataset's rows.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(std::span(order_));
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> rows;
    const std::size_t take = std::min(batch, order_.size());
    rows.reserve(take);
    while (rows.size() < take) {
      if (pos_ == order_.size()) {
        rng_.shuffle(std::span(order_));
        pos_ = 0;
      }
      rows.push_back(order_[pos_++]);
    }
    return rows;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct Slot {
  const Dataset* data;
  std::uint64_t id;
  std::size_t offset = 0;  // first sample-weight index of this task (sample granularity)
  std::uint64_t role = 0;  // distinguishes batch streams over different row sets of one task
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

class Engine {
 public:
  Engine(const TrainConfig& cfg, const Dataset* eval) : cfg_(cfg), eval_(eval) {
    cfg_.validate();
    record_.config = cfg;
    record_.weight_task_ids = {};
  }

  SharedModel model;
  RunRecord record_;

  void init_model(std::size_t dim, std::size_t hidden, std::span<const Slot> slots, std::uint64_t target_id,
                  std::size_t target_k) {
    std::vector<HeadSpec> specs;
    specs.push_back({target_id, target_k});
    for (const auto& s : slots)
      if (s.id != target_id) specs.push_back({s.id, s.data->n_classes()});
    model = make_model(dim, hidden, specs, cfg_.seed);
  }

  std::size_t steps_per_epoch(std::size_t n) const {
    return std::max(ceil_div(n, cfg_.batch_size), cfg_.min_steps_per_epoch);
  }

  /// Mean per-task weight mass; for task granularity this is w itself.
  Vector task_mass(std::span<const Slot> slots, const SimplexWeights& w) const {
    if (cfg_.granularity == Granularity::task) return {w.values().begin(), w.values().end()};
    Vector mass(slots.size(), 0.0);
    for (std::size_t t = 0; t < slots.size(); ++t)
      for (std::size_t i = 0; i < slots[t].data->size(); ++i) mass[t] += w[slots[t].offset + i];
    return mass;
  }

  std::size_t inner_steps(std::span<const Slot> slots, const SimplexWeights& w) const {
    if (cfg_.inner_steps > 0) return cfg_.inner_steps;
    const Vector mass = task_mass(slots, w);
    std::size_t n_max = 0;
    for (std::size_t t = 0; t < slots.size(); ++t)
      if (mass[t] > 0.0) n_max = std::max(n_max, slots[t].data->size());
    return steps_per_epoch(std::max<std::size_t>(n_max, 1));
  }

  /// SGD on sum_t (weighted) loss_t over `steps` mini-batch rounds.
  std::vector<std::pair<std::uint64_t, double>> run_steps(std::span<const Slot> slots, const SimplexWeights* w,
                                                          std::size_t steps, bool update_rep,
                                                          std::optional<double> lr_override = std::nullopt) {
    const Vector mass = w ? task_mass(slots, *w) : Vector(slots.size(), 1.0);
    std::size_t active = 0;
    for (double m : mass)
      if (m > 0.0) ++active;
    const double scale = cfg_.loss_scaling == LossScaling::times_tasks ? static_cast<double>(active) : 1.0;

    std::vector<double> loss_sum(slots.size(), 0.0), coef_sum(slots.size(), 0.0);
    Vector rep_grad(model.rep_param_count());
    std::vector<Vector> head_grads(slots.size());
    for (std::size_t t = 0; t < slots.size(); ++t)
      head_grads[t].assign(model.head(slots[t].id).params.size(), 0.0);

    for (std::size_t s = 0; s < steps; ++s) {
      std::fill(rep_grad.begin(), rep_grad.end(), 0.0);
      for (std::size_t t = 0; t < slots.size(); ++t) {
        if (mass[t] <= 0.0) continue;
        const Slot& slot = slots[t];
        const auto rows = stream(slot).next(cfg_.batch_size);
        Vector coef(rows.size());
        const double inv_b = 1.0 / static_cast<double>(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (!w) {
            coef[r] = inv_b;
          } else if (cfg_.granularity == Granularity::task) {
            coef[r] = scale * (*w)[t] * inv_b;
          } else {
            coef[r] = scale * (*w)[slot.offset + rows[r]] * static_cast<double>(slot.data->size()) * inv_b;
          }
        }
        double csum = 0.0;
        for (double c : coef) csum += c;
        auto& hg = head_grads[t];
        std::fill(hg.begin(), hg.end(), 0.0);
        const Head& h = model.head(slot.id);
        const double l = accumulate_gradient(model, h, *slot.data, rows, coef,
                                             update_rep ? std::span<double>(rep_grad) : std::span<double>{}, hg, ws_);
        loss_sum[t] += l;
        coef_sum[t] += csum;
      }
      if (update_rep) apply_update(model.rep, rep_grad, rep_state());
      for (std::size_t t = 0; t < slots.size(); ++t) {
        if (mass[t] <= 0.0) continue;
        apply_update(model.head(slots[t].id).params, head_grads[t], head_state(slots[t].id, lr_override));
      }
    }
    std::vector<std::pair<std::uint64_t, double>> losses;
    for (std::size_t t = 0; t < slots.size(); ++t)
      if (coef_sum[t] > 0.0) losses.emplace_back(slots[t].id, loss_sum[t] / coef_sum[t]);
    return losses;
  }

  void reset_optimizers() {
    rep_state_.reset();
    head_states_.clear();
  }

  /// Task gradients g_t for every slot at the current model.
  Vector estimate(std::span<const Slot> slots, const SimplexWeights& w, const Dataset& target_data,
                  std::uint64_t target_id) {
    if (cfg_.estimator == EstimatorKind::exact_hessian) {
      if (cfg_.granularity != Granularity::task)
        throw ArgumentError("exact_hessian estimator supports task granularity only");
      std::vector<const Dataset*> tasks;
      for (const auto& s : slots) tasks.push_back(s.data);
      return hessian_task_gradient(model, tasks, w, target_id, target_data, cfg_.hessian);
    }
    const Vector g0 = rep_gradient_flat(model, target_id, target_data, cfg_.subset_size, est_rng_);
    auto score = [&](std::span<const double> gt) {
      return cfg_.estimator == EstimatorKind::cosine
                 ? cosine_task_gradient(g0, gt, cfg_.c)
                 : identity_hessian_task_gradient(g0, gt, cfg_.identity_hessian_scale);
    };
    if (cfg_.granularity == Granularity::task) {
      Vector g(slots.size());
      for (std::size_t t = 0; t < slots.size(); ++t)
        g[t] = score(rep_gradient_flat(model, slots[t].id, *slots[t].data, cfg_.subset_size, est_rng_));
      return g;
    }
    Vector g(w.size(), 0.0);
    Vector gi(model.rep_param_count());
    std::vector<std::size_t> row(1);
    const Vector one{1.0};
    for (const auto& s : slots) {
      const Head& h = model.head(s.id);
      for (std::size_t i = 0; i < s.data->size(); ++i) {
        if (w[s.offset + i] == 0.0) continue;
        std::fill(gi.begin(), gi.end(), 0.0);
        row[0] = i;
        accumulate_gradient(model, h, *s.data, row, one, gi, {}, ws_);
        g[s.offset + i] = score(gi);
      }
    }
    return g;
  }

  SimplexWeights mirror(const SimplexWeights& w, const Vector& g) {
    SimplexWeights next = mirror_descent_step(w, g, cfg_.eta);
    if (cfg_.weight_floor) {
      record_.weight_floor_active = true;
      for (double x : next.values())
        if (x < *cfg_.weight_floor) {
          ++record_.floor_hits;
          break;
        }
      next = apply_weight_floor(next, *cfg_.weight_floor);
    }
    return next;
  }

  void snapshot(std::span<const Slot> slots, const SimplexWeights& w, std::size_t step) {
    record_.weights.push_back({step, task_mass(slots, w)});
  }

  void log_epoch(std::size_t epoch, std::string phase, std::vector<std::pair<std::uint64_t, double>> losses,
                 std::uint64_t target_id, const Dataset& fallback_eval) {
    const EvalResult r = evaluate(model, target_id, eval_ ? *eval_ : fallback_eval);
    record_.epochs.push_back({epoch, std::move(phase), std::move(losses), r.accuracy, r.mean_loss});
    record_.final_target_acc = r.accuracy;
    record_.final_target_loss = r.mean_loss;
  }

  const TrainConfig& cfg() const { return cfg_; }

 private:
  BatchStream& stream(const Slot& slot) {
    const std::pair key{slot.id, slot.role};
    auto it = streams_.find(key);
    if (it == streams_.end())
      it = streams_
               .emplace(key, BatchStream(slot.data->size(),
                                         hash64(cfg_.seed, tag64("batches"), slot.id, slot.role)))
               .first;
    return it->second;
  }

  OptimizerState& rep_state() {
    if (!rep_state_) rep_state_.emplace(cfg_.optimizer, model.rep_param_count());
    return *rep_state_;
  }

  OptimizerState& head_state(std::uint64_t id, std::optional<double> lr_override) {
    auto it = head_states_.find(id);
    if (it == head_states_.end()) {
      OptimizerConfig oc = cfg_.optimizer;
      if (lr_override) oc.lr = *lr_override;
      it = head_states_.emplace(id, OptimizerState(oc, model.head(id).params.size())).first;
    }
    return it->second;
  }

  TrainConfig cfg_;
  const Dataset* eval_;
  Workspace ws_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, BatchStream> streams_;
  std::optional<OptimizerState> rep_state_;
  std::map<std::uint64_t, OptimizerState> head_states_;
  Rng est_rng_{hash64(cfg_.seed, tag64("estimator"))};
};

inline void check_inputs(std::span<const Dataset> sources, const Dataset& target) {
  if (target.empty()) throw EmptyBatchError("target dataset is empty");
  std::vector<std::uint64_t> ids{target.task_id()};
  for (const auto& s : sources) {
    if (s.empty()) throw EmptyBatchError("source dataset is empty");
    if (s.dim() != target.dim()) throw DimensionError("source/target feature dims differ");
    if (std::find(ids.begin(), ids.end(), s.task_id()) != ids.end())
      throw ArgumentError("task ids must be distinct across target and sources");
    ids.push_back(s.task_id());
  }
}

inline std::vector<Slot> make_slots(std::span<const Dataset* const> data) {
  std::vector<Slot> slots;
  std::size_t offset = 0;
  for (const Dataset* d : data) {
    slots.push_back({d, d->task_id(), offset});
    offset += d->size();
  }
  return slots;
}

inline std::size_t total_rows(std::span<const Slot> slots) {
  std::size_t n = 0;
  for (const auto& s : slots) n += s.data->size();
  return n;
}

/// Converts per-task weights into the working weight vector for the
/// configured granularity: per sample, each task's mass is spread uniformly.
inline SimplexWeights working_weights(const TrainConfig& cfg, std::span<const Slot> slots,
                                      const SimplexWeights& task_weights) {
  if (task_weights.size() != slots.size()) throw ArgumentError("weights length does not match task count");
  if (cfg.granularity == Granularity::task) return task_weights;
  Vector w(total_rows(slots), 0.0);
  for (std::size_t t = 0; t < slots.size(); ++t) {
    const double per = task_weights[t] / static_cast<double>(slots[t].data->size());
    for (std::size_t i = 0; i < slots[t].data->size(); ++i) w[slots[t].offset + i] = per;
  }
  return SimplexWeights::normalized(std::move(w));
}

/// Simultaneous training of the representation and every head under
/// sum_t w_t L_t, target at slot 0.
inline std::pair<SharedModel, RunRecord> run_joint(std::span<const Dataset> sources, const Dataset& target,
                                                   const SimplexWeights& task_weights, const TrainConfig& cfg,
                                                   const Dataset* eval) {
  const auto t0 = std::chrono::steady_clock::now();
  check_inputs(sources, target);
  Engine eng(cfg, eval);

  Dataset b1, b2;
  const Dataset* tgt = &target;
  if (cfg.sample_split) {
    Rng split_rng(hash64(cfg.seed, tag64("split")));
    std::tie(b1, b2) = split_target(target, *cfg.sample_split, split_rng);
    tgt = &b1;
  }
  std::vector<const Dataset*> data{tgt};
  for (const auto& s : sources) data.push_back(&s);
  const auto slots = make_slots(data);
  eng.init_model(target.dim(), cfg.hidden, slots, target.task_id(), target.n_classes());
  for (const auto& s : slots) eng.record_.weight_task_ids.push_back(s.id);

  SimplexWeights w = working_weights(cfg, slots, task_weights);
  eng.snapshot(slots, w, 0);
  for (std::size_t round = 0; round < cfg.outer_rounds; ++round) {
    auto losses = eng.run_steps(slots, &w, eng.inner_steps(slots, w), true);
    if (cfg.weighted && (round + 1) % cfg.update_period() == 0) {
      const Vector g = eng.estimate(slots, w, *tgt, target.task_id());
      w = eng.mirror(w, g);
    }
    eng.snapshot(slots, w, round + 1);
    eng.log_epoch(round + 1, "train", std::move(losses), target.task_id(), target);
  }
  if (cfg.sample_split) {
    const std::array<Slot, 1> refit{Slot{&b2, target.task_id(), 0, 1}};
    for (std::size_t e = 0; e < cfg.finetune_epochs; ++e) {
      auto losses = eng.run_steps(refit, nullptr, eng.steps_per_epoch(b2.size()), false, cfg.head_lr);
      eng.log_epoch(cfg.outer_rounds + e + 1, "refit", std::move(losses), target.task_id(), target);
    }
  }
  eng.record_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(eng.model), std::move(eng.record_)};
}

/// Phase 1: representation + source heads under sum_t w_t L_t, with the
/// target head fitted on the frozen representation after every round.
/// Phase 2: fine-tune on the target (whole model, or head only).
inline std::pair<SharedModel, RunRecord> run_pretrain(std::span<const Dataset> sources, const Dataset& target,
                                                      const SimplexWeights& task_weights, const TrainConfig& cfg,
                                                      const Dataset* eval) {
  const auto t0 = std::chrono::steady_clock::now();
  if (sources.empty()) throw ArgumentError("pre-training needs at least one source");
  check_inputs(sources, target);
  Engine eng(cfg, eval);

  Dataset b1, b2;
  const Dataset* weight_target = &target;
  const Dataset* final_target = &target;
  if (cfg.sample_split) {
    Rng split_rng(hash64(cfg.seed, tag64("split")));
    std::tie(b1, b2) = split_target(target, *cfg.sample_split, split_rng);
    weight_target = &b1;
    final_target = &b2;
  }
  std::vector<const Dataset*> data;
  for (const auto& s : sources) data.push_back(&s);
  const auto slots = make_slots(data);
  eng.init_model(target.dim(), cfg.hidden, slots, target.task_id(), target.n_classes());
  for (const auto& s : slots) eng.record_.weight_task_ids.push_back(s.id);
  const std::array<Slot, 1> head_slot{Slot{weight_target, target.task_id(), 0}};
  const std::size_t head_steps = cfg.head_steps > 0 ? cfg.head_steps : eng.steps_per_epoch(weight_target->size());

  SimplexWeights w = working_weights(cfg, slots, task_weights);
  eng.snapshot(slots, w, 0);
  for (std::size_t round = 0; round < cfg.outer_rounds; ++round) {
    auto losses = eng.run_steps(slots, &w, eng.inner_steps(slots, w), true);
    auto head_loss = eng.run_steps(head_slot, nullptr, head_steps, false, cfg.head_lr);
    losses.insert(losses.end(), head_loss.begin(), head_loss.end());
    if (cfg.weighted && (round + 1) % cfg.update_period() == 0) {
      const Vector g = eng.estimate(slots, w, *weight_target, target.task_id());
      w = eng.mirror(w, g);
    }
    eng.snapshot(slots, w, round + 1);
    eng.log_epoch(round + 1, "pretrain", std::move(losses), target.task_id(), target);
  }

  // The split variant refits only the head on B2 (the representation stays
  // independent of B2).
  const bool frozen = cfg.finetune == FinetuneMode::frozen || cfg.sample_split.has_value();
  eng.reset_optimizers();
  const std::array<Slot, 1> ft_slot{Slot{final_target, target.task_id(), 0, cfg.sample_split ? 1u : 0u}};
  for (std::size_t e = 0; e < cfg.finetune_epochs; ++e) {
    auto losses = eng.run_steps(ft_slot, nullptr, eng.steps_per_epoch(final_target->size()), !frozen);
    eng.log_epoch(cfg.outer_rounds + e + 1, "finetune", std::move(losses), target.task_id(), target);
  }
  eng.record_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(eng.model), std::move(eng.record_)};
}

}  // namespace detail

/// Representation + one head trained on the target only.
inline std::pair<SharedModel, RunRecord> train_single_task(const Dataset& target, const TrainConfig& cfg, const Dataset* eval = nullptr) {
  TrainConfig c = cfg;
  c.paradigm = Paradigm::single;
  c.weighted = false;
  c.sample_split.reset();
  return detail::run_joint({}, target, SimplexWeights::one_hot(1, 0), c, eval);
}

/// Weighted pre-training on the sources, then target fine-tuning.
inline std::pair<SharedModel, RunRecord> pretrain_then_finetune(std::span<const Dataset> sources,
                                                                const Dataset& target,
                                                                const SimplexWeights& weights, const TrainConfig& cfg, const Dataset* eval = nullptr) {
  if (weights.size() != sources.size()) throw ArgumentError("pretrain_then_finetune: weights/sources mismatch");
  TrainConfig c = cfg;
  c.paradigm = Paradigm::pretrain;
  return detail::run_pretrain(sources, target, weights, c, eval);
}

/// Joint training; weights_with_target[0] is the target's weight.
inline std::pair<SharedModel, RunRecord> joint_train(std::span<const Dataset> sources, const Dataset& target,
                                                     const SimplexWeights& weights_with_target,
                                                     const TrainConfig& cfg, const Dataset* eval = nullptr) {
  if (weights_with_target.size() != sources.size() + 1)
    throw ArgumentError("joint_train: weights must cover target + sources");
  TrainConfig c = cfg;
  if (c.paradigm != Paradigm::normalized_joint) c.paradigm = Paradigm::joint;
  return detail::run_joint(sources, target, weights_with_target, c, eval);
}

/// Initial task weights implied by a paradigm: proportional to sample
/// counts, except normalized joint training (uniform).
inline SimplexWeights initial_weights(Paradigm p, std::span<const Dataset> sources, const Dataset& target) {
  std::vector<std::size_t> sizes;
  if (p == Paradigm::joint || p == Paradigm::normalized_joint) sizes.push_back(target.size());
  for (const auto& s : sources) sizes.push_back(s.size());
  return init_weights(p == Paradigm::normalized_joint ? InitMode::uniform : InitMode::proportional, sizes);
}

/// Target-aware weighted training: the configured paradigm with a mirror
/// step on the task (or sample) weights after every update period.
inline std::pair<SharedModel, RunRecord> tawt(std::span<const Dataset> sources, const Dataset& target,
                                              const TrainConfig& cfg, const Dataset* eval = nullptr) {
  if (cfg.paradigm == Paradigm::single) throw ArgumentError("tawt: paradigm must be pretrain or joint");
  TrainConfig c = cfg;
  c.weighted = true;
  const SimplexWeights w0 = initial_weights(c.paradigm, sources, target);
  if (c.paradigm == Paradigm::pretrain) return detail::run_pretrain(sources, target, w0, c, eval);
  return detail::run_joint(sources, target, w0, c, eval);
}

/// Dispatches on cfg.paradigm / cfg.weighted with paradigm-default weights.
inline std::pair<SharedModel, RunRecord> train_paradigm(std::span<const Dataset> sources, const Dataset& target,
                                                        const TrainConfig& cfg, const Dataset* eval = nullptr) {
  if (cfg.paradigm == Paradigm::single) return train_single_task(target, cfg, eval);
  if (cfg.weighted) return tawt(sources, target, cfg, eval);
  const SimplexWeights w0 = initial_weights(cfg.paradigm, sources, target);
  if (cfg.paradigm == Paradigm::pretrain) return pretrain_then_finetune(sources, target, w0, cfg, eval);
  return joint_train(sources, target, w0, cfg, eval);
}

}  // namespace tawt
