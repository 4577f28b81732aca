// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic teacher-student task family: a uniform base dataset, label-flipped
// copies of it, one interpolating teacher per copy, and fresh inputs labelled
// by each teacher's argmax.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tawt/dataset.hpp"
#include "tawt/model.hpp"
#include "tawt/numerics.hpp"
#include "tawt/training.hpp"

namespace tawt {

struct TaskSpec {
  double flip_rate = 0.0;
  std::size_t n_examples = 200;  // base dataset size the teacher is fit on
  std::size_t input_dim = 20;
  std::size_t n_classes = 10;
  std::size_t teacher_hidden_width = 256;
  std::uint64_t seed = 0;
  double accuracy_threshold = 1.0;

  void validate() const {
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw ArgumentError("TaskSpec: flip rate must lie in [0, 1]");
    if (n_examples == 0 || input_dim == 0 || n_classes == 0 || teacher_hidden_width == 0)
      throw ArgumentError("TaskSpec: sizes must be positive");
    if (!(accuracy_threshold > 0.0 && accuracy_threshold <= 1.0))
      throw ArgumentError("TaskSpec: accuracy threshold must lie in (0, 1]");
  }
};

inline constexpr std::uint64_t kTargetTaskId = 1;

/// Integer key of a flip rate (q * 10000, rounded); used for seeds and task ids.
inline std::uint64_t flip_key(double q) { return static_cast<std::uint64_t>(std::llround(q * 10000.0)); }

inline std::uint64_t source_task_id(double q) { return 0x10000 + flip_key(q); }

inline Dataset generate_base_dataset(std::size_t n, std::size_t d, std::size_t k, Rng& rng) {
  if (n == 0 || d == 0 || k == 0) throw ArgumentError("generate_base_dataset: sizes must be positive");
  std::vector<double> x(n * d);
  for (double& v : x) v = rng.uniform(-0.5, 0.5);
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = rng.index(k);
  return Dataset(d, k, std::move(x), std::move(y));
}

/// Resamples the labels of exactly round(q * n) distinct rows uniformly over
/// all classes (the new label may equal the old one).
inline Dataset flip_labels(const Dataset& base, double q, Rng& rng) {
  if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("flip_labels: q must lie in [0, 1]");
  Dataset out = base;
  const auto count = static_cast<std::size_t>(std::floor(q * static_cast<double>(base.size()) + 0.5));
  const auto rows = rng.sample_without_replacement(base.size(), count);
  auto& labels = out.mutable_labels();
  for (std::size_t r : rows) labels[r] = rng.index(base.n_classes());
  return out;
}

/// Trains a two-layer network until its training accuracy reaches
/// spec.accuracy_threshold, for at most cfg.outer_rounds epochs.
inline SharedModel fit_teacher(const Dataset& data, const TaskSpec& spec, const TrainConfig& cfg) {
  spec.validate();
  if (data.empty()) throw EmptyBatchError("fit_teacher: empty data");
  TrainConfig c = cfg;
  c.hidden = spec.teacher_hidden_width;
  c.weighted = false;
  detail::Engine eng(c, nullptr);
  const std::array<detail::Slot, 1> slots{detail::Slot{&data, data.task_id(), 0, 0}};
  eng.init_model(data.dim(), c.hidden, slots, data.task_id(), data.n_classes());
  double acc = evaluate(eng.model, data.task_id(), data).accuracy;
  for (std::size_t epoch = 0; epoch < c.outer_rounds && acc < spec.accuracy_threshold; ++epoch) {
    eng.run_steps(slots, nullptr, eng.steps_per_epoch(data.size()), true);
    acc = evaluate(eng.model, data.task_id(), data).accuracy;
  }
  if (acc < spec.accuracy_threshold)
    throw FitFailure("fit_teacher: training accuracy " + std::to_string(acc) + " below threshold after " +
                     std::to_string(c.outer_rounds) + " epochs");
  return std::move(eng.model);
}

/// Fresh uniform inputs labelled by the teacher's argmax (ties to the lowest class).
inline Dataset sample_task_data(const SharedModel& teacher, std::size_t n, std::size_t d, Rng& rng,
                                std::uint64_t task_id = 0) {
  if (teacher.heads.empty()) throw LookupError("sample_task_data: teacher has no head");
  if (teacher.input_dim != d) throw DimensionError("sample_task_data: teacher input dim mismatch");
  const Head& h = teacher.heads.front();
  Dataset out(d, h.n_classes, task_id);
  Workspace ws;
  ws.resize(teacher.hidden, h.n_classes);
  Vector x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x) v = rng.uniform(-0.5, 0.5);
    detail::forward_into(teacher, h, x, ws);
    out.push_back(x, argmax(ws.logits));
  }
  return out;
}

struct FamilySizes {
  std::size_t target_n = 100;
  std::size_t source_n = 10000;
  std::size_t eval_n = 2000;
};

struct TaskFamily {
  Dataset target;
  Dataset target_eval;
  std::vector<Dataset> sources;  // one per spec, in spec order
  std::vector<double> flip_rates;
  SharedModel target_teacher;
  std::vector<SharedModel> source_teachers;
};

/// Default teacher optimisation at desk scale.
inline TrainConfig default_teacher_config() {
  TrainConfig c;
  c.optimizer.lr = 3e-3;
  c.batch_size = 20;
  c.outer_rounds = 60;
  return c;
}

/// Teacher for flip rate q: labels of the shared base dataset flipped, then refit.
/// Its streams derive from hash64(seed, q * 10000) only.
inline SharedModel teacher_for(const Dataset& base, const TaskSpec& spec, std::uint64_t family_seed,
                               const TrainConfig& teacher_cfg) {
  const std::uint64_t child = hash64(family_seed, flip_key(spec.flip_rate));
  Rng flip_rng(hash64(child, tag64("flip")));
  Dataset flipped = flip_labels(base, spec.flip_rate, flip_rng);
  flipped.set_task_id(1);
  TrainConfig c = teacher_cfg;
  c.seed = hash64(child, tag64("teacher"));
  return fit_teacher(flipped, spec, c);
}

/// Target drawn from the q = 0 teacher; every source from its own teacher;
/// all teachers fit on flips of the same base dataset.
inline TaskFamily make_task_family(std::span<const TaskSpec> specs, const FamilySizes& sizes,
                                   std::uint64_t seed, const TrainConfig& teacher_cfg = default_teacher_config()) {
  if (specs.empty()) throw ArgumentError("make_task_family: no task specs");
  const TaskSpec& ref = specs.front();
  for (const auto& s : specs) {
    s.validate();
    if (s.input_dim != ref.input_dim || s.n_classes != ref.n_classes || s.n_examples != ref.n_examples ||
        s.teacher_hidden_width != ref.teacher_hidden_width)
      throw ArgumentError("make_task_family: specs must share dims, classes, base size and width");
  }
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j)
      if (flip_key(specs[i].flip_rate) == flip_key(specs[j].flip_rate))
        throw ArgumentError("make_task_family: duplicate flip rate");

  const std::size_t d = ref.input_dim;
  Rng base_rng(hash64(seed, tag64("base")));
  const Dataset base = generate_base_dataset(ref.n_examples, d, ref.n_classes, base_rng);

  TaskFamily fam;
  TaskSpec target_spec = ref;
  target_spec.flip_rate = 0.0;
  fam.target_teacher = teacher_for(base, target_spec, seed, teacher_cfg);
  Rng target_rng(hash64(seed, tag64("target")));
  fam.target = sample_task_data(fam.target_teacher, sizes.target_n, d, target_rng, kTargetTaskId);
  Rng eval_rng(hash64(seed, tag64("eval")));
  fam.target_eval = sample_task_data(fam.target_teacher, sizes.eval_n, d, eval_rng, kTargetTaskId);

  for (const auto& s : specs) {
    SharedModel teacher = flip_key(s.flip_rate) == 0 ? fam.target_teacher : teacher_for(base, s, seed, teacher_cfg);
    Rng src_rng(hash64(seed, tag64("source"), flip_key(s.flip_rate)));
    fam.sources.push_back(sample_task_data(teacher, sizes.source_n, d, src_rng, source_task_id(s.flip_rate)));
    fam.flip_rates.push_back(s.flip_rate);
    fam.source_teachers.push_back(std::move(teacher));
  }
  return fam;
}

}  // namespace tawt
