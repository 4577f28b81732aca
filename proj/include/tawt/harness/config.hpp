// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Experiment configuration (JSON, schema_version 1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tawt/distance.hpp"
#include "tawt/numerics.hpp"
#include "tawt/taskgen.hpp"
#include "tawt/training.hpp"

namespace tawt::harness {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct FamilyConfig {
  std::size_t input_dim = 20;
  std::size_t n_classes = 10;
  std::size_t teacher_hidden_width = 256;
  std::size_t base_n = 200;
  std::size_t eval_n = 2000;
  std::size_t val_n = 500;
  TrainConfig teacher = default_teacher_config();
};

struct ArmConfig {
  std::string name;
  TrainConfig train;
  std::vector<double> c_sweep;  // weighted pre-training: best c by validation accuracy
  std::string share_seed_with;  // arm whose seed stream this arm reuses
  json echo;
};

struct DistanceSection {
  std::vector<double> flip_grid;
  std::vector<std::uint64_t> seeds;
  DistanceConfig cfg;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string output_dir = "tawt_out";
  std::uint64_t master_seed = 0;
  FamilyConfig family;
  std::vector<std::size_t> target_sizes{100};
  std::size_t source_n = 2000;
  std::vector<double> ratios;  // if set, source_n = ratio * target_size per point
  std::vector<std::vector<double>> source_sets;
  std::vector<ArmConfig> arms;
  std::vector<std::uint64_t> seeds;
  std::optional<DistanceSection> distance;
  json raw;

  /// Every flip rate referenced by a source set, sorted, deduplicated.
  std::vector<double> flip_rates() const {
    std::set<std::uint64_t> seen;
    std::vector<double> out;
    for (const auto& s : source_sets)
      for (double q : s)
        if (seen.insert(flip_key(q)).second) out.push_back(q);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t max_target_size() const { return *std::max_element(target_sizes.begin(), target_sizes.end()); }

  std::size_t source_size(std::size_t target_size, std::size_t ratio_index) const {
    if (ratios.empty()) return source_n;
    return static_cast<std::size_t>(std::llround(ratios[ratio_index] * static_cast<double>(target_size)));
  }

  std::size_t max_source_size() const {
    std::size_t m = ratios.empty() ? source_n : 0;
    for (std::size_t t : target_sizes)
      for (std::size_t r = 0; r < ratios.size(); ++r) m = std::max(m, source_size(t, r));
    return m;
  }

  std::size_t arm_index(const std::string& name) const {
    for (std::size_t i = 0; i < arms.size(); ++i)
      if (arms[i].name == name) return i;
    throw ConfigError("config: unknown arm '" + name + "'");
  }
};

namespace detail {

[[noreturn]] inline void field_error(const std::string& path, const std::string& msg) {
  throw ConfigError("config: field '" + path + "': " + msg);
}

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) field_error(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) ok = true;
    if (!ok) field_error(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
  }
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double get_double(const json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) field_error(path, "must be finite");
  return v;
}

inline std::uint64_t get_u64(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
    field_error(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::size_t get_size(const json& j, const std::string& path) { return static_cast<std::size_t>(get_u64(j, path)); }

inline std::size_t get_positive(const json& j, const std::string& path) {
  const std::size_t v = get_size(j, path);
  if (v == 0) field_error(path, "must be positive");
  return v;
}

inline bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) field_error(path, "expected true or false");
  return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) field_error(path, "expected a string");
  return j.get<std::string>();
}

template <class E>
E get_enum(const json& j, const std::string& path, std::initializer_list<std::pair<const char*, E>> table) {
  const std::string s = get_string(j, path);
  std::string names;
  for (const auto& [n, v] : table) {
    if (s == n) return v;
    names += names.empty() ? n : std::string(", ") + n;
  }
  field_error(path, "unknown value '" + s + "' (expected one of: " + names + ")");
}

inline std::vector<double> get_flips(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) field_error(path, "expected a nonempty array of flip rates");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const double q = get_double(j[i], p);
    if (q < 0.0 || q > 1.0) field_error(p, "flip rate must lie in [0, 1]");
    for (double o : out)
      if (flip_key(o) == flip_key(q)) field_error(p, "duplicate flip rate");
    out.push_back(q);
  }
  return out;
}

inline std::vector<std::uint64_t> get_seeds(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) field_error(path, "expected a nonempty array of seeds");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_u64(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

inline constexpr std::pair<const char*, Paradigm> kParadigms[] = {
    {"single", Paradigm::single},
    {"pretrain", Paradigm::pretrain},
    {"joint", Paradigm::joint},
    {"normalized_joint", Paradigm::normalized_joint}};

inline std::string paradigm_name(Paradigm p) {
  for (const auto& [n, v] : kParadigms)
    if (v == p) return n;
  return "?";
}

inline std::string estimator_name(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::cosine: return "cosine";
    case EstimatorKind::identity_hessian: return "identity_hessian";
    case EstimatorKind::exact_hessian: return "exact_hessian";
  }
  return "?";
}

/// Applies the keys of `j` on top of `base`.
inline TrainConfig parse_train(const json& j, const std::string& path, TrainConfig base) {
  using namespace detail;
  check_keys(j, path,
             {"paradigm", "weighted", "granularity", "estimator", "c", "eta", "subset_size", "inner_steps",
              "outer_rounds", "weight_update_period", "finetune_epochs", "finetune", "head_steps", "head_lr",
              "optimizer", "lr", "beta1", "beta2", "epsilon", "hidden", "batch_size", "min_steps_per_epoch",
              "seed", "sample_split", "identity_hessian_scale", "weight_floor", "loss_scaling", "hessian"});
  TrainConfig c = base;
  auto has = [&](const char* k) { return j.contains(k); };
  auto at = [&](const char* k) -> const json& { return j.at(k); };
  auto p = [&](const char* k) { return join(path, k); };
  if (has("paradigm"))
    c.paradigm = get_enum<Paradigm>(at("paradigm"), p("paradigm"),
                                    {{"single", Paradigm::single},
                                     {"pretrain", Paradigm::pretrain},
                                     {"joint", Paradigm::joint},
                                     {"normalized_joint", Paradigm::normalized_joint}});
  if (has("weighted")) c.weighted = get_bool(at("weighted"), p("weighted"));
  if (has("granularity"))
    c.granularity = get_enum<Granularity>(at("granularity"), p("granularity"),
                                          {{"task", Granularity::task}, {"sample", Granularity::sample}});
  if (has("estimator"))
    c.estimator = get_enum<EstimatorKind>(at("estimator"), p("estimator"),
                                          {{"cosine", EstimatorKind::cosine},
                                           {"identity_hessian", EstimatorKind::identity_hessian},
                                           {"exact_hessian", EstimatorKind::exact_hessian}});
  if (has("c")) c.c = get_double(at("c"), p("c"));
  if (has("eta")) c.eta = get_double(at("eta"), p("eta"));
  if (has("subset_size")) c.subset_size = get_positive(at("subset_size"), p("subset_size"));
  if (has("inner_steps")) c.inner_steps = get_size(at("inner_steps"), p("inner_steps"));
  if (has("outer_rounds")) c.outer_rounds = get_positive(at("outer_rounds"), p("outer_rounds"));
  if (has("weight_update_period"))
    c.weight_update_period = get_size(at("weight_update_period"), p("weight_update_period"));
  if (has("finetune_epochs")) c.finetune_epochs = get_size(at("finetune_epochs"), p("finetune_epochs"));
  if (has("finetune"))
    c.finetune = get_enum<FinetuneMode>(at("finetune"), p("finetune"),
                                        {{"full", FinetuneMode::full}, {"frozen", FinetuneMode::frozen}});
  if (has("head_steps")) c.head_steps = get_size(at("head_steps"), p("head_steps"));
  if (has("head_lr")) c.head_lr = get_double(at("head_lr"), p("head_lr"));
  if (has("optimizer"))
    c.optimizer.kind = get_enum<OptimizerKind>(at("optimizer"), p("optimizer"),
                                               {{"adam", OptimizerKind::adam}, {"sgd", OptimizerKind::sgd}});
  if (has("lr")) c.optimizer.lr = get_double(at("lr"), p("lr"));
  if (has("beta1")) c.optimizer.beta1 = get_double(at("beta1"), p("beta1"));
  if (has("beta2")) c.optimizer.beta2 = get_double(at("beta2"), p("beta2"));
  if (has("epsilon")) c.optimizer.epsilon = get_double(at("epsilon"), p("epsilon"));
  if (has("hidden")) c.hidden = get_positive(at("hidden"), p("hidden"));
  if (has("batch_size")) c.batch_size = get_positive(at("batch_size"), p("batch_size"));
  if (has("min_steps_per_epoch"))
    c.min_steps_per_epoch = get_positive(at("min_steps_per_epoch"), p("min_steps_per_epoch"));
  if (has("seed")) c.seed = get_u64(at("seed"), p("seed"));
  if (has("sample_split")) {
    if (at("sample_split").is_null()) c.sample_split.reset();
    else c.sample_split = get_double(at("sample_split"), p("sample_split"));
  }
  if (has("identity_hessian_scale"))
    c.identity_hessian_scale = get_double(at("identity_hessian_scale"), p("identity_hessian_scale"));
  if (has("weight_floor")) {
    if (at("weight_floor").is_null()) c.weight_floor.reset();
    else c.weight_floor = get_double(at("weight_floor"), p("weight_floor"));
  }
  if (has("loss_scaling"))
    c.loss_scaling = get_enum<LossScaling>(at("loss_scaling"), p("loss_scaling"),
                                           {{"direct", LossScaling::direct}, {"times_tasks", LossScaling::times_tasks}});
  if (has("hessian")) {
    const json& h = at("hessian");
    const std::string hp = p("hessian");
    check_keys(h, hp, {"fd_step", "relative_ridge", "max_escalations", "max_params"});
    if (h.contains("fd_step")) c.hessian.fd_step = get_double(h["fd_step"], join(hp, "fd_step"));
    if (h.contains("relative_ridge")) c.hessian.relative_ridge = get_double(h["relative_ridge"], join(hp, "relative_ridge"));
    if (h.contains("max_escalations"))
      c.hessian.max_escalations = static_cast<int>(get_size(h["max_escalations"], join(hp, "max_escalations")));
    if (h.contains("max_params")) c.hessian.max_params = get_positive(h["max_params"], join(hp, "max_params"));
  }
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    field_error(path.empty() ? "train" : path, e.what());
  }
  return c;
}

inline json train_to_json(const TrainConfig& c) {
  json j;
  j["paradigm"] = paradigm_name(c.paradigm);
  j["weighted"] = c.weighted;
  j["granularity"] = c.granularity == Granularity::task ? "task" : "sample";
  j["estimator"] = estimator_name(c.estimator);
  j["c"] = c.c;
  j["eta"] = c.eta;
  j["subset_size"] = c.subset_size;
  j["inner_steps"] = c.inner_steps;
  j["outer_rounds"] = c.outer_rounds;
  j["weight_update_period"] = c.weight_update_period;
  j["finetune_epochs"] = c.finetune_epochs;
  j["finetune"] = c.finetune == FinetuneMode::full ? "full" : "frozen";
  j["head_steps"] = c.head_steps;
  j["head_lr"] = c.head_lr ? json(*c.head_lr) : json(nullptr);
  j["optimizer"] = to_string(c.optimizer.kind);
  j["lr"] = c.optimizer.lr;
  j["beta1"] = c.optimizer.beta1;
  j["beta2"] = c.optimizer.beta2;
  j["epsilon"] = c.optimizer.epsilon;
  j["hidden"] = c.hidden;
  j["batch_size"] = c.batch_size;
  j["min_steps_per_epoch"] = c.min_steps_per_epoch;
  j["seed"] = c.seed;
  j["sample_split"] = c.sample_split ? json(*c.sample_split) : json(nullptr);
  j["identity_hessian_scale"] = c.identity_hessian_scale;
  j["weight_floor"] = c.weight_floor ? json(*c.weight_floor) : json(nullptr);
  j["loss_scaling"] = c.loss_scaling == LossScaling::direct ? "direct" : "times_tasks";
  j["hessian"] = {{"fd_step", c.hessian.fd_step},
                  {"relative_ridge", c.hessian.relative_ridge},
                  {"max_escalations", c.hessian.max_escalations},
                  {"max_params", c.hessian.max_params}};
  return j;
}

/// "line L, column C" for a byte offset into `text`.
inline std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline ExperimentConfig parse_config(const std::string& text) {
  using namespace detail;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    if (auto pos = msg.find("parse error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError("config: malformed JSON at " + locate(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + msg);
  }
  check_keys(j, "", {"schema_version", "output_dir", "master_seed", "family", "target_sizes", "source_n", "ratios",
                     "source_sets", "train", "arms", "seeds", "distance"});
  ExperimentConfig cfg;
  cfg.raw = j;
  if (!j.contains("schema_version")) field_error("schema_version", "missing");
  cfg.schema_version = static_cast<int>(get_u64(j["schema_version"], "schema_version"));
  if (cfg.schema_version != kSchemaVersion)
    field_error("schema_version", "unsupported version " + std::to_string(cfg.schema_version));
  if (j.contains("output_dir")) cfg.output_dir = get_string(j["output_dir"], "output_dir");
  if (j.contains("master_seed")) cfg.master_seed = get_u64(j["master_seed"], "master_seed");

  if (j.contains("family")) {
    const json& f = j["family"];
    check_keys(f, "family", {"input_dim", "n_classes", "teacher_hidden_width", "base_n", "eval_n", "val_n", "teacher"});
    auto& fc = cfg.family;
    if (f.contains("input_dim")) fc.input_dim = get_positive(f["input_dim"], "family.input_dim");
    if (f.contains("n_classes")) fc.n_classes = get_positive(f["n_classes"], "family.n_classes");
    if (fc.n_classes < 2) field_error("family.n_classes", "need at least 2 classes");
    if (f.contains("teacher_hidden_width"))
      fc.teacher_hidden_width = get_positive(f["teacher_hidden_width"], "family.teacher_hidden_width");
    if (f.contains("base_n")) fc.base_n = get_positive(f["base_n"], "family.base_n");
    if (f.contains("eval_n")) fc.eval_n = get_positive(f["eval_n"], "family.eval_n");
    if (f.contains("val_n")) fc.val_n = get_positive(f["val_n"], "family.val_n");
    if (f.contains("teacher")) fc.teacher = parse_train(f["teacher"], "family.teacher", fc.teacher);
  }

  if (j.contains("target_sizes")) {
    const json& t = j["target_sizes"];
    if (!t.is_array() || t.empty()) field_error("target_sizes", "expected a nonempty array");
    cfg.target_sizes.clear();
    for (std::size_t i = 0; i < t.size(); ++i)
      cfg.target_sizes.push_back(get_positive(t[i], "target_sizes[" + std::to_string(i) + "]"));
  }
  if (j.contains("source_n")) cfg.source_n = get_positive(j["source_n"], "source_n");
  if (j.contains("ratios")) {
    const json& r = j["ratios"];
    if (!r.is_array() || r.empty()) field_error("ratios", "expected a nonempty array");
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string p = "ratios[" + std::to_string(i) + "]";
      const double v = get_double(r[i], p);
      if (!(v > 0.0)) field_error(p, "ratio must be positive");
      cfg.ratios.push_back(v);
    }
  }

  if (!j.contains("source_sets")) field_error("source_sets", "missing");
  {
    const json& s = j["source_sets"];
    if (!s.is_array() || s.empty()) field_error("source_sets", "expected a nonempty array of flip-rate lists");
    for (std::size_t i = 0; i < s.size(); ++i) cfg.source_sets.push_back(get_flips(s[i], "source_sets[" + std::to_string(i) + "]"));
  }

  TrainConfig defaults;
  if (j.contains("train")) defaults = parse_train(j["train"], "train", defaults);

  if (!j.contains("arms")) field_error("arms", "missing");
  const json& arms = j["arms"];
  if (!arms.is_array() || arms.empty()) field_error("arms", "expected at least one arm");
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const std::string p = "arms[" + std::to_string(i) + "]";
    const json& a = arms[i];
    check_keys(a, p, {"name", "paradigm", "weighted", "estimator", "granularity", "train", "c_sweep", "share_seed_with"});
    ArmConfig arm;
    if (!a.contains("name")) field_error(p + ".name", "missing");
    arm.name = get_string(a["name"], p + ".name");
    if (arm.name.empty() || arm.name.find_first_of(",/\\\n\"") != std::string::npos)
      field_error(p + ".name", "must be nonempty and free of , / \\ \" and newlines");
    for (const auto& other : cfg.arms)
      if (other.name == arm.name) field_error(p + ".name", "duplicate arm name");
    json t = a.contains("train") ? a["train"] : json::object();
    if (!t.is_object()) field_error(p + ".train", "expected an object");
    for (const char* k : {"paradigm", "weighted", "estimator", "granularity"})
      if (a.contains(k)) t[k] = a[k];
    if (!t.contains("paradigm")) field_error(p + ".paradigm", "missing");
    arm.train = parse_train(t, p, defaults);
    if (arm.train.weighted && arm.train.paradigm == Paradigm::single)
      field_error(p + ".weighted", "single-task arms cannot be weighted");
    if (a.contains("c_sweep")) {
      const json& cs = a["c_sweep"];
      if (!cs.is_array() || cs.empty()) field_error(p + ".c_sweep", "expected a nonempty array");
      for (std::size_t k = 0; k < cs.size(); ++k) {
        const double v = get_double(cs[k], p + ".c_sweep[" + std::to_string(k) + "]");
        if (!(v > 0.0)) field_error(p + ".c_sweep[" + std::to_string(k) + "]", "must be positive");
        arm.c_sweep.push_back(v);
      }
      if (!arm.train.weighted) field_error(p + ".c_sweep", "only meaningful for weighted arms");
    }
    if (a.contains("share_seed_with")) arm.share_seed_with = get_string(a["share_seed_with"], p + ".share_seed_with");
    arm.echo = a;
    cfg.arms.push_back(std::move(arm));
  }
  for (std::size_t i = 0; i < cfg.arms.size(); ++i) {
    const auto& s = cfg.arms[i].share_seed_with;
    if (s.empty()) continue;
    bool found = false;
    for (std::size_t k = 0; k < cfg.arms.size(); ++k)
      if (cfg.arms[k].name == s) found = k != i && cfg.arms[k].share_seed_with.empty();
    if (!found)
      field_error("arms[" + std::to_string(i) + "].share_seed_with",
                  "must name another arm that does not itself share a seed");
  }

  if (!j.contains("seeds")) field_error("seeds", "missing");
  cfg.seeds = get_seeds(j["seeds"], "seeds");

  if (j.contains("distance")) {
    const json& d = j["distance"];
    check_keys(d, "distance", {"flip_grid", "seeds", "weights_mode", "mix", "head_epochs", "head_n", "source_n",
                               "oracle_n", "train"});
    DistanceSection ds;
    if (!d.contains("flip_grid")) field_error("distance.flip_grid", "missing");
    ds.flip_grid = get_flips(d["flip_grid"], "distance.flip_grid");
    ds.seeds = d.contains("seeds") ? get_seeds(d["seeds"], "distance.seeds") : cfg.seeds;
    auto& dc = ds.cfg;
    if (d.contains("weights_mode"))
      dc.weights_mode = get_enum<DistanceWeights>(d["weights_mode"], "distance.weights_mode",
                                                  {{"one_hot", DistanceWeights::one_hot},
                                                   {"mix_with_target", DistanceWeights::mix_with_target}});
    if (d.contains("mix")) {
      dc.mix = get_double(d["mix"], "distance.mix");
      if (dc.mix < 0.0 || dc.mix > 1.0) field_error("distance.mix", "must lie in [0, 1]");
    }
    if (d.contains("head_epochs")) dc.head_epochs = get_size(d["head_epochs"], "distance.head_epochs");
    if (d.contains("head_n")) dc.sizes.target_n = get_positive(d["head_n"], "distance.head_n");
    if (d.contains("source_n")) dc.sizes.source_n = get_positive(d["source_n"], "distance.source_n");
    if (d.contains("oracle_n")) dc.oracle_n = get_positive(d["oracle_n"], "distance.oracle_n");
    if (d.contains("train")) dc.train = parse_train(d["train"], "distance.train", dc.train);
    dc.sizes.eval_n = cfg.family.eval_n;
    dc.spec.input_dim = cfg.family.input_dim;
    dc.spec.n_classes = cfg.family.n_classes;
    dc.spec.teacher_hidden_width = cfg.family.teacher_hidden_width;
    dc.spec.n_examples = cfg.family.base_n;
    dc.teacher = cfg.family.teacher;
    dc.seeds = ds.seeds;
    cfg.distance = std::move(ds);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace tawt::harness
