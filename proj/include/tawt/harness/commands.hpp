// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// generate / run / distance / report.
//
// Layout under the output directory:
//   data/manifest.json, data/seed<i>/{target,target_eval,target_val,source_q<key>}.csv
//   runs/<key>.{json,metrics.csv,weights.csv,ckpt}
//   summary.csv, distance.csv, distance.json, curves.csv, weights_<arm>.csv

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tawt/dataset.hpp"
#include "tawt/distance.hpp"
#include "tawt/harness/config.hpp"
#include "tawt/harness/io.hpp"
#include "tawt/model.hpp"
#include "tawt/taskgen.hpp"
#include "tawt/training.hpp"

namespace tawt::harness {

enum ExitCode : int { kOk = 0, kConfigError = 1, kJobFailures = 2, kIoError = 3 };

struct Options {
  std::optional<std::string> out;
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> arm;
  std::ostream* log = &std::cerr;
};

inline ExperimentConfig apply_options(ExperimentConfig cfg, const Options& opt) {
  if (opt.out) cfg.output_dir = *opt.out;
  if (opt.seed_override) cfg.master_seed = *opt.seed_override;
  if (opt.arm) cfg.arm_index(*opt.arm);  // validates the filter
  return cfg;
}

// ---- data cache -------------------------------------------------------------

inline fs::path data_dir(const ExperimentConfig& cfg) { return fs::path(cfg.output_dir) / "data"; }

inline std::string seed_dir_name(std::size_t seed_index) { return "seed" + std::to_string(seed_index); }

inline std::string source_file_name(double q) { return "source_q" + std::to_string(flip_key(q)) + ".csv"; }

inline std::uint64_t family_seed(const ExperimentConfig& cfg, std::size_t seed_index) {
  return hash64(cfg.master_seed, tag64("family"), cfg.seeds[seed_index]);
}

/// Everything that determines the cached datasets.
inline json family_key(const ExperimentConfig& cfg) {
  const auto& f = cfg.family;
  json flips = json::array();
  for (double q : cfg.flip_rates()) flips.push_back(q);
  return {{"schema_version", kSchemaVersion},
          {"master_seed", cfg.master_seed},
          {"seeds", cfg.seeds},
          {"input_dim", f.input_dim},
          {"n_classes", f.n_classes},
          {"teacher_hidden_width", f.teacher_hidden_width},
          {"base_n", f.base_n},
          {"eval_n", f.eval_n},
          {"val_n", f.val_n},
          {"teacher", train_to_json(f.teacher)},
          {"target_n", cfg.max_target_size()},
          {"source_n", cfg.max_source_size()},
          {"flip_rates", flips}};
}

inline std::string family_hash(const ExperimentConfig& cfg) { return hex64(fnv1a(family_key(cfg).dump())); }

enum class CacheState { missing, stale, corrupt, ok };

inline CacheState check_cache(const ExperimentConfig& cfg, std::string* detail = nullptr) {
  const fs::path dir = data_dir(cfg);
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) return CacheState::missing;
  json m;
  try {
    m = json::parse(read_file(mpath));
  } catch (const json::exception&) {
    if (detail) *detail = "unreadable manifest";
    return CacheState::corrupt;
  }
  if (!m.contains("family_hash") || m["family_hash"] != family_hash(cfg)) return CacheState::stale;
  for (const auto& f : m.at("files")) {
    const fs::path p = dir / f.at("path").get<std::string>();
    if (!fs::exists(p) || file_hash(p) != f.at("hash").get<std::string>()) {
      if (detail) *detail = p.string();
      return CacheState::corrupt;
    }
  }
  return CacheState::ok;
}

inline std::vector<TaskSpec> family_specs(const ExperimentConfig& cfg) {
  std::vector<TaskSpec> specs;
  for (double q : cfg.flip_rates()) {
    TaskSpec s;
    s.flip_rate = q;
    s.n_examples = cfg.family.base_n;
    s.input_dim = cfg.family.input_dim;
    s.n_classes = cfg.family.n_classes;
    s.teacher_hidden_width = cfg.family.teacher_hidden_width;
    specs.push_back(s);
  }
  return specs;
}

/// Writes the cached task family; a valid cache is left untouched.
inline int cmd_generate(ExperimentConfig cfg, const Options& opt) {
  cfg = apply_options(std::move(cfg), opt);
  std::ostream& log = *opt.log;
  if (check_cache(cfg) == CacheState::ok) {
    log << "generate: cache hit (" << family_hash(cfg) << ")\n";
    return kOk;
  }
  const fs::path dir = data_dir(cfg);
  ensure_dir(dir);
  const auto specs = family_specs(cfg);
  const FamilySizes sizes{cfg.max_target_size(), cfg.max_source_size(), cfg.family.eval_n};
  std::vector<std::string> errors(cfg.seeds.size());
  std::vector<json> files(cfg.seeds.size(), json::array());
  parallel_for(cfg.seeds.size(), opt.jobs, [&](std::size_t i) {
    try {
      const std::uint64_t seed = family_seed(cfg, i);
      const TaskFamily fam = make_task_family(specs, sizes, seed, cfg.family.teacher);
      Rng val_rng(hash64(seed, tag64("val")));
      const Dataset val = sample_task_data(fam.target_teacher, cfg.family.val_n, cfg.family.input_dim, val_rng,
                                           kTargetTaskId);
      const std::string sub = seed_dir_name(i);
      auto put = [&](const std::string& name, const Dataset& d) {
        std::ostringstream os;
        write_dataset_csv(os, d);
        const std::string body = os.str();
        atomic_write(dir / sub / name, body);
        files[i].push_back({{"path", sub + "/" + name}, {"hash", hex64(fnv1a(body))}});
      };
      put("target.csv", fam.target);
      put("target_eval.csv", fam.target_eval);
      put("target_val.csv", val);
      for (std::size_t s = 0; s < fam.sources.size(); ++s) put(source_file_name(fam.flip_rates[s]), fam.sources[s]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw IoError("generate: seed index " + std::to_string(i) + ": " + errors[i]);
  json all = json::array();
  for (auto& f : files)
    for (auto& e : f) all.push_back(e);
  json manifest = {{"schema_version", kSchemaVersion},
                   {"family_hash", family_hash(cfg)},
                   {"family", family_key(cfg)},
                   {"files", all}};
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
  log << "generate: wrote " << all.size() << " files (" << family_hash(cfg) << ")\n";
  return kOk;
}

// ---- runs -----------------------------------------------------------------

struct Job {
  std::size_t index = 0;
  std::size_t arm = 0;
  std::size_t seed_index = 0;
  std::size_t target_size = 0;
  std::size_t source_n = 0;
  std::vector<double> sources;
  std::uint64_t train_seed = 0;
  std::string key;
};

inline std::vector<Job> enumerate_jobs(const ExperimentConfig& cfg) {
  std::vector<Job> jobs;
  const std::string fh = family_hash(cfg);
  const std::size_t n_ratio = std::max<std::size_t>(cfg.ratios.size(), 1);
  std::size_t index = 0;
  for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
    const auto& arm = cfg.arms[a];
    const std::size_t seed_arm = arm.share_seed_with.empty() ? a : cfg.arm_index(arm.share_seed_with);
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
      for (std::size_t t : cfg.target_sizes)
        for (std::size_t r = 0; r < n_ratio; ++r)
          for (const auto& set : cfg.source_sets) {
            Job j;
            j.index = index++;
            j.arm = a;
            j.seed_index = s;
            j.target_size = t;
            j.source_n = cfg.source_size(t, r);
            j.sources = set;
            j.train_seed = hash64(cfg.master_seed, seed_arm, s);
            json k = {{"family", fh},
                      {"train", train_to_json(arm.train)},
                      {"c_sweep", arm.c_sweep},
                      {"seed", j.train_seed},
                      {"seed_index", s},
                      {"target_size", t},
                      {"source_n", j.source_n},
                      {"sources", set}};
            j.key = arm.name + "-" + hex64(fnv1a(k.dump()));
            jobs.push_back(std::move(j));
          }
  }
  return jobs;
}

/// Read-only datasets of one seed index, loaded once and shared by jobs.
struct SeedData {
  Dataset target, eval, val;
  std::map<std::uint64_t, Dataset> sources;  // by flip key
};

inline SeedData load_seed_data(const ExperimentConfig& cfg, std::size_t seed_index) {
  const fs::path dir = data_dir(cfg) / seed_dir_name(seed_index);
  SeedData d;
  d.target = load_dataset_csv((dir / "target.csv").string(), kTargetTaskId);
  d.eval = load_dataset_csv((dir / "target_eval.csv").string(), kTargetTaskId);
  d.val = load_dataset_csv((dir / "target_val.csv").string(), kTargetTaskId);
  for (double q : cfg.flip_rates())
    d.sources.emplace(flip_key(q), load_dataset_csv((dir / source_file_name(q)).string(), source_task_id(q)));
  return d;
}

struct JobResult {
  bool ok = false;
  std::string error;
  double acc = 0.0, loss = 0.0;
  std::string timestamp;
  bool skipped = false;
};

inline fs::path runs_dir(const ExperimentConfig& cfg) { return fs::path(cfg.output_dir) / "runs"; }

inline JobResult run_job(const ExperimentConfig& cfg, const Job& job, const SeedData& data) {
  const ArmConfig& arm = cfg.arms[job.arm];
  const Dataset target = data.target.head(job.target_size);
  std::vector<Dataset> sources;
  for (double q : job.sources) {
    Dataset s = data.sources.at(flip_key(q)).head(job.source_n);
    sources.push_back(std::move(s));
  }
  TrainConfig tc = arm.train;
  tc.seed = job.train_seed;

  std::optional<std::pair<SharedModel, RunRecord>> best;
  double best_val = -1.0, best_c = tc.c;
  const std::vector<double> cs = arm.c_sweep.empty() ? std::vector<double>{tc.c} : arm.c_sweep;
  for (double c : cs) {
    TrainConfig t = tc;
    t.c = c;
    auto res = train_paradigm(sources, target, t, &data.eval);
    const double v = cs.size() > 1 ? evaluate(res.first, kTargetTaskId, data.val).accuracy : 0.0;
    if (!best || v > best_val) {
      best_val = v;
      best_c = c;
      best = std::move(res);
    }
  }
  auto& [model, record] = *best;
  const fs::path dir = runs_dir(cfg);
  const fs::path ckpt = dir / (job.key + ".ckpt");
  {
    std::ostringstream os(std::ios::binary);
    write_checkpoint(os, model);
    atomic_write(ckpt, os.str());
  }
  record.checkpoint = ckpt.filename().string();
  atomic_write(dir / (job.key + ".metrics.csv"), metrics_csv(record));
  atomic_write(dir / (job.key + ".weights.csv"), weights_csv(record));
  JobResult r;
  r.ok = true;
  r.acc = record.final_target_acc;
  r.loss = record.final_target_loss;
  r.timestamp = utc_timestamp();
  json j = {{"status", "ok"},
            {"key", job.key},
            {"arm", arm.name},
            {"seed", cfg.seeds[job.seed_index]},
            {"train_seed", job.train_seed},
            {"target_size", job.target_size},
            {"source_n", job.source_n},
            {"sources", job.sources},
            {"chosen_c", best_c},
            {"validation_acc", cs.size() > 1 ? json(best_val) : json(nullptr)},
            {"timestamp", r.timestamp},
            {"record", run_record_to_json(record)}};
  atomic_write(dir / (job.key + ".json"), j.dump(1) + "\n");
  return r;
}

/// A completed run on disk for this key, if any.
inline std::optional<JobResult> completed_job(const ExperimentConfig& cfg, const Job& job) {
  const fs::path p = runs_dir(cfg) / (job.key + ".json");
  if (!fs::exists(p)) return std::nullopt;
  try {
    const json j = json::parse(read_file(p));
    if (j.at("status") != "ok") return std::nullopt;
    JobResult r;
    r.ok = true;
    r.skipped = true;
    r.acc = j.at("record").at("final_target_acc").get<double>();
    r.loss = j.at("record").at("final_target_loss").get<double>();
    r.timestamp = j.at("timestamp").get<std::string>();
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline const char* kSummaryHeader =
    "arm,seed,target_size,ratio,flip_rate,final_target_acc,final_target_loss,status,error,run_key,timestamp";

inline int cmd_run(ExperimentConfig cfg, const Options& opt) {
  cfg = apply_options(std::move(cfg), opt);
  std::ostream& log = *opt.log;
  std::string bad;
  switch (check_cache(cfg, &bad)) {
    case CacheState::corrupt:
      throw IoError("run: cached dataset does not match its manifest hash (" + bad + "); refusing to run");
    case CacheState::missing:
    case CacheState::stale:
      cmd_generate(cfg, Options{std::nullopt, opt.jobs, std::nullopt, std::nullopt, opt.log});
      break;
    case CacheState::ok:
      break;
  }
  std::vector<Job> jobs;
  for (auto& j : enumerate_jobs(cfg))
    if (!opt.arm || cfg.arms[j.arm].name == *opt.arm) jobs.push_back(std::move(j));

  std::vector<SeedData> data;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) data.push_back(load_seed_data(cfg, s));
  ensure_dir(runs_dir(cfg));

  std::vector<JobResult> results(jobs.size());
  std::mutex log_mu;
  parallel_for(jobs.size(), opt.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    if (auto done = completed_job(cfg, job)) {
      results[i] = *done;
    } else {
      try {
        results[i] = run_job(cfg, job, data[job.seed_index]);
      } catch (const std::exception& e) {
        results[i].ok = false;
        results[i].error = e.what();
        results[i].timestamp = utc_timestamp();
        try {
          json j = {{"status", "error"}, {"key", job.key}, {"error", e.what()}, {"timestamp", results[i].timestamp}};
          atomic_write(runs_dir(cfg) / (job.key + ".json"), j.dump(1) + "\n");
        } catch (const std::exception&) {
        }
      }
    }
    std::lock_guard<std::mutex> lk(log_mu);
    log << "run: [" << (i + 1) << "/" << jobs.size() << "] " << job.key << " "
        << (results[i].ok ? (results[i].skipped ? "skipped (done)" : "ok") : "FAILED: " + results[i].error) << "\n";
  });

  std::string csv = std::string(kSummaryHeader) + "\n";
  std::size_t failures = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job& j = jobs[i];
    const JobResult& r = results[i];
    if (!r.ok) ++failures;
    csv += cfg.arms[j.arm].name + "," + std::to_string(cfg.seeds[j.seed_index]) + "," + std::to_string(j.target_size) +
           "," + format_double(static_cast<double>(j.source_n) / static_cast<double>(j.target_size)) + "," +
           join_flips(j.sources) + "," + (r.ok ? format_double(r.acc) : "") + "," + (r.ok ? format_double(r.loss) : "") +
           "," + (r.ok ? "ok" : "error") + "," + csv_cell(r.error) + "," + j.key + "," + r.timestamp + "\n";
  }
  atomic_write(fs::path(cfg.output_dir) / "summary.csv", csv);
  log << "run: " << jobs.size() - failures << "/" << jobs.size() << " jobs ok\n";
  if (failures > 0 && failures == jobs.size()) return kJobFailures;
  return kOk;
}

// ---- distance -------------------------------------------------------------

inline const char* kDistanceHeader = "flip_rate,seed,source_risk_estimate,oracle_risk_estimate,distance,aux_accuracy";

inline std::string distance_csv(const std::vector<TaskDistanceEstimate>& rows) {
  std::string s = std::string(kDistanceHeader) + "\n";
  for (const auto& e : rows)
    s += format_double(e.flip_rate) + "," + std::to_string(e.seed) + "," + format_double(e.weighted_source_target_risk) +
         "," + format_double(e.oracle_target_risk) + "," + format_double(e.distance) + "," +
         format_double(e.aux_accuracy) + "\n";
  return s;
}

inline int cmd_distance(ExperimentConfig cfg, const Options& opt) {
  cfg = apply_options(std::move(cfg), opt);
  if (!cfg.distance) throw ConfigError("config: field 'distance': missing (required by the distance command)");
  std::ostream& log = *opt.log;
  const DistanceSection& ds = *cfg.distance;
  std::vector<std::vector<TaskDistanceEstimate>> per_seed(ds.seeds.size());
  std::vector<std::string> errors(ds.seeds.size());
  parallel_for(ds.seeds.size(), opt.jobs, [&](std::size_t i) {
    try {
      per_seed[i] = distance_replicate(ds.flip_grid, hash64(cfg.master_seed, tag64("distance"), ds.seeds[i]), ds.cfg);
      for (auto& e : per_seed[i]) e.seed = ds.seeds[i];
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) {
      log << "distance: seed " << ds.seeds[i] << " failed: " << errors[i] << "\n";
      return kJobFailures;
    }
  std::vector<TaskDistanceEstimate> rows;
  for (std::size_t g = 0; g < ds.flip_grid.size(); ++g)
    for (auto& r : per_seed) rows.push_back(r[g]);
  json detail = json::array();
  for (const auto& e : rows) {
    if (e.negative)
      log << "distance: warning: negative estimate " << format_double(e.distance) << " at flip rate "
          << format_double(e.flip_rate) << ", seed " << e.seed << "\n";
    detail.push_back({{"flip_rate", e.flip_rate},
                      {"seed", e.seed},
                      {"weighted_source_target_risk", e.weighted_source_target_risk},
                      {"oracle_target_risk", e.oracle_target_risk},
                      {"distance", e.distance},
                      {"aux_accuracy", e.aux_accuracy},
                      {"oracle_accuracy", e.oracle_accuracy},
                      {"negative", e.negative},
                      {"weights", e.weights},
                      {"head_epochs", e.head_epochs},
                      {"eval_n", e.eval_n}});
  }
  const fs::path out(cfg.output_dir);
  atomic_write(out / "distance.csv", distance_csv(rows));
  json j = {{"config", cfg.raw.contains("distance") ? cfg.raw["distance"] : json(nullptr)},
            {"train", train_to_json(ds.cfg.train)},
            {"estimates", detail}};
  atomic_write(out / "distance.json", j.dump(1) + "\n");
  log << "distance: wrote " << rows.size() << " rows\n";
  return kOk;
}

// ---- report ---------------------------------------------------------------

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0, stderr_ = 0.0;
};

/// Mean and standard error (sample sd / sqrt(n); 0 for n = 1).
inline Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  a.n = v.size();
  if (v.empty()) return a;
  double s = 0.0;
  for (double x : v) s += x;
  a.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  }
  return a;
}

inline int cmd_report(const fs::path& results, std::ostream& log = std::cerr) {
  const fs::path summary = results / "summary.csv";
  if (!fs::exists(summary)) {
    log << "report: no summary.csv under '" << results.string() << "'\n";
    return kIoError;
  }
  const CsvTable t = read_csv(summary);
  const std::size_t c_arm = t.column("arm"), c_size = t.column("target_size"), c_ratio = t.column("ratio"),
                    c_flip = t.column("flip_rate"), c_acc = t.column("final_target_acc"),
                    c_loss = t.column("final_target_loss"), c_status = t.column("status"), c_key = t.column("run_key");

  struct Group {
    std::vector<std::string> id;  // arm, target_size, ratio, flip_rate
    std::vector<double> acc, loss;
    std::vector<std::string> keys;
  };
  std::vector<Group> groups;
  for (const auto& row : t.rows) {
    if (row[c_status] != "ok") continue;
    std::vector<std::string> id{row[c_arm], row[c_size], row[c_ratio], row[c_flip]};
    Group* g = nullptr;
    for (auto& x : groups)
      if (x.id == id) g = &x;
    if (!g) {
      groups.push_back({id, {}, {}, {}});
      g = &groups.back();
    }
    g->acc.push_back(std::stod(row[c_acc]));
    g->loss.push_back(std::stod(row[c_loss]));
    g->keys.push_back(row[c_key]);
  }
  if (groups.empty()) {
    log << "report: no completed runs in '" << results.string() << "'\n";
    return kIoError;
  }

  std::string curves = "arm,target_size,ratio,flip_rate,n_seeds,mean_acc,stderr_acc,mean_loss,stderr_loss\n";
  for (const auto& g : groups) {
    const Aggregate a = aggregate(g.acc), l = aggregate(g.loss);
    curves += g.id[0] + "," + g.id[1] + "," + g.id[2] + "," + g.id[3] + "," + std::to_string(a.n) + "," +
              format_double(a.mean) + "," + format_double(a.stderr_) + "," + format_double(l.mean) + "," +
              format_double(l.stderr_) + "\n";
  }
  atomic_write(results / "curves.csv", curves);

  // Weight trajectories: per arm, per point, mean over seeds at each step.
  std::map<std::string, std::string> traj;
  std::map<std::string, std::size_t> width;
  std::map<std::string, std::vector<std::string>> bodies;
  for (const auto& g : groups) {
    std::vector<std::vector<double>> sum;
    std::vector<std::size_t> steps;
    std::size_t count = 0;
    for (const auto& key : g.keys) {
      const fs::path p = results / "runs" / (key + ".json");
      if (!fs::exists(p)) continue;
      const json j = json::parse(read_file(p));
      const auto& ws = j.at("record").at("weights");
      if (ws.empty()) continue;
      if (sum.empty()) {
        for (const auto& s : ws) {
          steps.push_back(s.at("step").get<std::size_t>());
          sum.emplace_back(s.at("weights").size(), 0.0);
        }
      }
      if (ws.size() != sum.size()) throw IoError("report: runs of one point disagree on trajectory length");
      for (std::size_t k = 0; k < ws.size(); ++k) {
        const auto w = ws[k].at("weights").get<std::vector<double>>();
        if (w.size() != sum[k].size()) throw IoError("report: runs of one point disagree on weight count");
        for (std::size_t t2 = 0; t2 < w.size(); ++t2) sum[k][t2] += w[t2];
      }
      ++count;
    }
    if (count == 0) continue;
    const std::string& arm = g.id[0];
    for (std::size_t k = 0; k < sum.size(); ++k) {
      std::string line = g.id[1] + "," + g.id[2] + "," + g.id[3] + "," + std::to_string(steps[k]);
      for (double v : sum[k]) line += "," + format_double(v / static_cast<double>(count));
      bodies[arm].push_back(line);
      width[arm] = std::max(width[arm], sum[k].size());
    }
  }
  for (const auto& [arm, lines] : bodies) {
    std::string s = "target_size,ratio,flip_rate,step";
    for (std::size_t k = 0; k < width[arm]; ++k) s += ",w_" + std::to_string(k);
    s += "\n";
    for (const auto& l : lines) s += l + "\n";
    atomic_write(results / ("weights_" + arm + ".csv"), s);
  }
  log << "report: " << groups.size() << " curve points, " << bodies.size() << " weight trajectories\n";
  return kOk;
}

}  // namespace tawt::harness
