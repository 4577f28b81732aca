// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tawt/distance.hpp"
#include "tawt/harness/commands.hpp"
#include "tawt/harness/config.hpp"
#include "tawt/taskgen.hpp"
#include "tawt/training.hpp"
#include "tawt/weighting.hpp"
#include "test_util.hpp"

using namespace tawt;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kGradRelTol = 1e-5;
constexpr double kShiftTol = 1e-12;
constexpr double kHandTol = 1e-6;
constexpr double kMatchUlps = 4.0;
constexpr double kSignAgreement = 0.80;
constexpr double kCosineFloor = 0.05;
constexpr double kOracleRelTol = 1e-4;
constexpr double kLargeTargetGap = 0.02;
const double kSelfDistanceBand = 0.1 * std::log(10.0);

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) {
  std::fprintf(stderr, "  .. %s\n", s.c_str());
  std::fflush(stderr);
}

// 1 ---------------------------------------------------------------------------
Outcome gradient_oracle() {
  double worst = 0.0;
  int n = 0;
  for (std::uint64_t s = 1; s <= 25; ++s, ++n) {
    Rng rng(hash64(s, tag64("grad")));
    const std::size_t d = 2 + rng.index(4), h = 2 + rng.index(6), k = 2 + rng.index(4);
    const SharedModel m = testing::random_model(d, h, {{0, k}}, s);
    const Dataset batch = testing::random_dataset(1 + rng.index(8), d, k, rng);
    const GradSnapshot g = backward(m, 0, batch);
    Vector analytic = g.rep_grad;
    analytic.insert(analytic.end(), g.head_grad.begin(), g.head_grad.end());
    worst = std::max(worst, testing::max_rel_error(analytic, testing::fd_model_gradient(m, 0, batch)));
  }
  return {worst <= kGradRelTol, fmt("%d instances, max rel error %.3g (tol %.0e)", n, worst, kGradRelTol)};
}

// 2 ---------------------------------------------------------------------------
Outcome mirror_algebra() {
  Rng rng(2);
  double worst_sum = 0.0, worst_shift = 0.0;
  bool order_ok = true, zero_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(8);
    Vector raw(n), g(n);
    for (double& x : raw) x = rng.uniform(0.01, 1.0);
    for (double& x : g) x = rng.uniform(-10.0, 10.0);
    const SimplexWeights w = SimplexWeights::normalized(raw);
    const double eta = rng.uniform(0.01, 2.0);
    const SimplexWeights next = mirror_descent_step(w, g, eta);
    double s = 0.0;
    for (double x : next.values()) {
      if (x < 0.0) order_ok = false;
      s += x;
    }
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    Vector shifted = g;
    const double c = rng.uniform(-100.0, 100.0);
    for (double& x : shifted) x += c;
    const SimplexWeights ns = mirror_descent_step(w, shifted, eta);
    for (std::size_t i = 0; i < n; ++i) worst_shift = std::max(worst_shift, std::abs(ns[i] - next[i]));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (g[i] < g[j] && !(next[i] / next[j] > w[i] / w[j])) order_ok = false;
    if (!(mirror_descent_step(w, g, 0.0) == w)) zero_ok = false;
  }
  const SimplexWeights hand = mirror_descent_step(SimplexWeights(Vector{0.5, 0.5}), Vector{-1.0, 1.0}, 1.0);
  const double hand_err = std::max(std::abs(hand[0] - 0.880797), std::abs(hand[1] - 0.119203));
  const bool pass = worst_sum <= 1e-12 && worst_shift <= kShiftTol && order_ok && zero_ok && hand_err <= kHandTol;
  return {pass, fmt("simplex dev %.1e, shift dev %.1e, order %s, eta0 %s, hand (%.6f, %.6f)", worst_sum, worst_shift,
                    order_ok ? "ok" : "broken", zero_ok ? "ok" : "broken", hand[0], hand[1])};
}

// 3 ---------------------------------------------------------------------------
Outcome matching_identity() {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 2 + rng.index(6);
    Vector r(T);
    for (double& x : r) x = rng.uniform(0.05, 2.5);
    const double lo = *std::min_element(r.begin(), r.end()), hi = *std::max_element(r.begin(), r.end());
    const double target = rng.uniform(lo, hi);
    const SimplexWeights w = matching_weights(r, target);
    double mix = 0.0;
    for (std::size_t t = 0; t < T; ++t) mix += w[t] * r[t];
    const double ulp = std::nextafter(target, INFINITY) - target;
    worst = std::max(worst, std::abs(mix - target) / ulp);
  }
  int raised = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Vector r{rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0)};
    const double target = trial % 2 ? rng.uniform(0.0, 0.49) : rng.uniform(1.01, 2.0);
    try {
      matching_weights(r, target);
    } catch (const BracketingViolation&) {
      ++raised;
    }
  }
  return {worst <= kMatchUlps && raised == 20,
          fmt("100 bracketing instances, max %.1f ulps; %d/20 non-bracketing raised", worst, raised)};
}

// 4 ---------------------------------------------------------------------------
Outcome estimator_agreement() {
  int counted = 0, agree = 0, configs = 0;
  std::size_t max_params = 0;
  for (std::uint64_t s = 1; s <= 100; ++s, ++configs) {
    Rng rng(hash64(s, tag64("agree")));
    const std::size_t d = 2 + rng.index(3), h = 3 + rng.index(4), k = 3;
    const std::size_t T = 2 + rng.index(2);
    // Sources and target share a random linear labeller up to per-task noise;
    // the model sits at (near) the minimiser of the weighted source loss.
    std::vector<double> wl(d * k);
    for (double& v : wl) v = rng.uniform(-1, 1);
    auto make = [&](std::size_t n, double noise, std::uint64_t id) {
      Dataset out(d, k, id);
      Vector x(d);
      for (std::size_t i = 0; i < n; ++i) {
        for (double& v : x) v = rng.uniform(-1, 1);
        std::size_t y = 0;
        double best = -1e300;
        for (std::size_t c = 0; c < k; ++c) {
          double z = 0.0;
          for (std::size_t j = 0; j < d; ++j) z += wl[c * d + j] * x[j];
          if (z > best) best = z, y = c;
        }
        if (rng.uniform() < noise) y = rng.index(k);
        out.push_back(x, y);
      }
      return out;
    };
    const Dataset target = make(40, 0.0, kTargetTaskId);
    std::vector<Dataset> sources;
    for (std::size_t t = 0; t < T; ++t) sources.push_back(make(60, rng.uniform(0.0, 1.0), 100 + t));
    const SimplexWeights w = init_weights(InitMode::uniform, std::vector<std::size_t>(T, 60));

    DistanceConfig dc;
    dc.train.hidden = h;
    dc.train.outer_rounds = 1000;
    dc.train.batch_size = 20;
    dc.train.optimizer.lr = 1e-2;
    dc.train.seed = s;
    dc.head_epochs = 1000;
    SharedModel model;
    estimate_weighted_source_target_risk(sources, w, target, target, dc, &model);
    max_params = std::max(max_params, model.rep_param_count());

    std::vector<const Dataset*> tasks;
    for (const auto& src : sources) tasks.push_back(&src);
    const Vector exact = hessian_task_gradient(model, tasks, w, kTargetTaskId, target);
    const Vector g0 = backward(model, kTargetTaskId, target).rep_grad;
    for (std::size_t t = 0; t < T; ++t) {
      const double cg = cosine_task_gradient(g0, backward(model, sources[t].task_id(), sources[t]).rep_grad, 1.0);
      if (std::abs(cg) <= kCosineFloor) continue;
      ++counted;
      if ((cg > 0.0) == (exact[t] > 0.0)) ++agree;
    }
  }
  const double rate = counted ? static_cast<double>(agree) / counted : 0.0;

  const GradientFn g0 = [](std::span<const double> p) { return Vector{p[0] - 3.0}; };
  const std::vector<GradientFn> gt{[](std::span<const double> p) { return Vector{2.0 * p[0]}; }};
  const double oracle = hessian_task_gradient(Vector{1.0}, g0, gt, SimplexWeights(Vector{1.0}))[0];
  const double oracle_err = std::abs(oracle - 2.0) / 2.0;
  return {configs >= 25 && max_params <= 200 && rate >= kSignAgreement && oracle_err <= kOracleRelTol,
          fmt("%d configs (rep params <= %zu), sign agreement %d/%d = %.3f (min %.2f); 1-D oracle %.8f (rel err %.1e)",
              configs, max_params, agree, counted, rate, kSignAgreement, oracle, oracle_err)};
}

// 5 ---------------------------------------------------------------------------
Outcome flip_rate_shape() {
  const std::vector<double> grid{0.0, 0.2, 0.5, 1.0};
  const std::vector<std::size_t> sizes{10, 100, 1000, 10000};
  const int seeds = 5;
  // acc[n][0] single, acc[n][1 + q] pretrain-transfer, summed over seeds.
  std::vector<std::vector<double>> acc(sizes.size(), std::vector<double>(grid.size() + 1, 0.0));
  for (int s = 1; s <= seeds; ++s) {
    std::vector<TaskSpec> specs;
    for (double q : grid) {
      TaskSpec t;
      t.flip_rate = q;
      specs.push_back(t);
    }
    const TaskFamily fam = make_task_family(specs, FamilySizes{10000, 10000, 2000}, static_cast<std::uint64_t>(s));
    TrainConfig cfg;
    cfg.optimizer.lr = 3e-3;
    cfg.outer_rounds = 30;
    cfg.finetune_epochs = 30;
    cfg.min_steps_per_epoch = 10;
    cfg.finetune = FinetuneMode::frozen;
    cfg.seed = hash64(static_cast<std::uint64_t>(s), tag64("student"));
    for (std::size_t ni = 0; ni < sizes.size(); ++ni) {
      const Dataset t = fam.target.head(sizes[ni]);
      acc[ni][0] += train_single_task(t, cfg, &fam.target_eval).second.final_target_acc / seeds;
      for (std::size_t qi = 0; qi < grid.size(); ++qi) {
        const std::vector<Dataset> src{fam.sources[qi]};
        acc[ni][qi + 1] +=
            pretrain_then_finetune(src, t, SimplexWeights(Vector{1.0}), cfg, &fam.target_eval).second.final_target_acc /
            seeds;
      }
    }
    progress(fmt("flip-rate seed %d/%d done", s, seeds));
  }
  std::string table;
  for (std::size_t ni = 0; ni < sizes.size(); ++ni) {
    table += fmt("\n      n=%-5zu single %.4f  transfer", sizes[ni], acc[ni][0]);
    for (std::size_t qi = 0; qi < grid.size(); ++qi) table += fmt(" q%.1f=%.4f", grid[qi], acc[ni][qi + 1]);
  }
  const bool a = acc[0][1] > acc[0][0] && acc[1][1] > acc[1][0];
  int inversions = 0;
  for (std::size_t qi = 0; qi + 1 < grid.size(); ++qi)
    if (acc[1][qi + 2] > acc[1][qi + 1]) ++inversions;
  const bool b = inversions <= 1;
  double best = 0.0;
  for (std::size_t qi = 0; qi < grid.size(); ++qi) best = std::max(best, acc[3][qi + 1]);
  const bool c = acc[3][0] >= best - kLargeTargetGap;
  return {a && b && c, fmt("(a) %s (b) %s, %d inversion(s) (c) %s, single %.4f vs best transfer %.4f", a ? "ok" : "FAIL",
                           b ? "ok" : "FAIL", inversions, c ? "ok" : "FAIL", acc[3][0], best) +
                           table};
}

// 6 ---------------------------------------------------------------------------
Outcome weight_identification() {
  int wins = 0;
  double joint_acc = 0.0, tawt_acc = 0.0;
  std::string per;
  const int seeds = 5;
  for (int s = 1; s <= seeds; ++s) {
    std::vector<TaskSpec> specs(2);
    specs[1].flip_rate = 1.0;
    const TaskFamily fam = make_task_family(specs, FamilySizes{100, 2000, 2000}, static_cast<std::uint64_t>(s));
    TrainConfig cfg;
    cfg.paradigm = Paradigm::joint;
    cfg.optimizer.lr = 3e-3;  // 20 rounds of one epoch, c = 1, eta = 1, subset 64
    cfg.seed = hash64(static_cast<std::uint64_t>(s), tag64("student"));
    const RunRecord base = train_paradigm(fam.sources, fam.target, cfg, &fam.target_eval).second;
    cfg.weighted = true;
    const RunRecord weighted = train_paradigm(fam.sources, fam.target, cfg, &fam.target_eval).second;
    const Vector& w = weighted.weights.back().weights;  // (target, copy, distractor)
    wins += w[1] > w[2];
    joint_acc += base.final_target_acc / seeds;
    tawt_acc += weighted.final_target_acc / seeds;
    per += fmt("\n      seed %d: w=(%.3f, %.3f, %.3f) joint %.4f tawt %.4f", s, w[0], w[1], w[2], base.final_target_acc,
               weighted.final_target_acc);
  }
  return {wins >= 4 && tawt_acc >= joint_acc,
          fmt("copy > distractor in %d/5 seeds; mean acc tawt %.4f vs joint %.4f", wins, tawt_acc, joint_acc) + per};
}

// 7 ---------------------------------------------------------------------------
Outcome distance_trend() {
  const std::vector<double> grid{0.0, 0.2, 0.5, 1.0};
  DistanceConfig cfg;
  cfg.seeds = {1, 2, 3, 4, 5};
  std::vector<TaskDistanceEstimate> all;
  for (std::uint64_t s : cfg.seeds) {
    auto r = distance_replicate(grid, s, cfg);
    all.insert(all.end(), r.begin(), r.end());
    progress(fmt("distance seed %llu done", static_cast<unsigned long long>(s)));
  }
  const Vector mean = mean_distance(all, grid);
  int inversions = 0;
  for (std::size_t i = 0; i + 1 < mean.size(); ++i)
    if (mean[i + 1] < mean[i]) ++inversions;
  const bool self_ok = std::abs(mean[0]) <= kSelfDistanceBand;
  std::string curve;
  for (std::size_t i = 0; i < grid.size(); ++i) curve += fmt(" q%.1f=%.4f", grid[i], mean[i]);
  return {self_ok && inversions <= 1, fmt("self distance %.4f (band +-%.4f), %d inversion(s); mean curve", mean[0],
                                          kSelfDistanceBand, inversions) +
                                          curve};
}

// 8, 9 ------------------------------------------------------------------------
std::vector<std::string> summary_without_timestamp(const fs::path& dir) {
  const harness::CsvTable t = harness::read_csv(dir / "summary.csv");
  const std::size_t ts = t.column("timestamp");
  std::vector<std::string> rows;
  for (const auto& r : t.rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c)
      if (c != ts) line += r[c] + ",";
    rows.push_back(line);
  }
  return rows;
}

fs::path scratch_root() {
  static const fs::path p = fs::temp_directory_path() / ("tawt_acceptance_" + std::to_string(::getpid()));
  return p;
}

Outcome reference_determinism() {
  const harness::ExperimentConfig cfg =
      harness::load_config(fs::path(TAWT_SOURCE_DIR) / "configs" / "reference.json");
  std::ostringstream log;
  std::vector<std::vector<std::string>> runs;
  for (const char* name : {"a", "b"}) {
    harness::Options opt;
    opt.out = (scratch_root() / name).string();
    opt.log = &log;
    if (harness::cmd_run(cfg, opt) != harness::kOk) return {false, "cmd_run failed:\n" + log.str()};
    runs.push_back(summary_without_timestamp(scratch_root() / name));
  }
  const bool same = runs[0] == runs[1] && !runs[0].empty();
  return {same, fmt("%zu summary rows, %s", runs[0].size(), same ? "identical" : "DIFFER")};
}

Outcome eta_zero_coincidence() {
  // The reference config pairs tawt_joint_eta0 with joint under a shared seed.
  const fs::path dir = scratch_root() / "a";
  if (!fs::exists(dir / "summary.csv")) {
    const harness::ExperimentConfig cfg =
        harness::load_config(fs::path(TAWT_SOURCE_DIR) / "configs" / "reference.json");
    harness::Options opt;
    opt.out = dir.string();
    std::ostringstream log;
    opt.log = &log;
    harness::cmd_run(cfg, opt);
  }
  const harness::CsvTable t = harness::read_csv(dir / "summary.csv");
  std::map<std::string, std::map<std::string, std::string>> by;
  for (const auto& r : t.rows) by[r[t.column("seed")]][r[t.column("arm")]] = r[t.column("final_target_acc")];
  int pairs = 0, equal = 0;
  for (auto& [seed, arms] : by) {
    if (!arms.count("joint") || !arms.count("tawt_joint_eta0")) continue;
    ++pairs;
    equal += arms["joint"] == arms["tawt_joint_eta0"];
  }

  // Library level, pre-training and joint, bitwise on the final accuracy.
  std::vector<TaskSpec> specs(2);
  specs[1].flip_rate = 0.5;
  const TaskFamily fam = make_task_family(specs, FamilySizes{100, 1000, 1000}, 9);
  int lib = 0, lib_equal = 0;
  for (Paradigm p : {Paradigm::joint, Paradigm::pretrain, Paradigm::normalized_joint}) {
    TrainConfig cfg;
    cfg.paradigm = p;
    cfg.outer_rounds = 5;
    cfg.finetune_epochs = 5;
    cfg.seed = 4;
    const double fixed = train_paradigm(fam.sources, fam.target, cfg, &fam.target_eval).second.final_target_acc;
    cfg.weighted = true;
    cfg.eta = 0.0;
    const double weighted = train_paradigm(fam.sources, fam.target, cfg, &fam.target_eval).second.final_target_acc;
    ++lib;
    lib_equal += std::memcmp(&fixed, &weighted, sizeof(double)) == 0;
  }
  return {pairs > 0 && equal == pairs && lib_equal == lib,
          fmt("harness %d/%d seeds bitwise equal; library %d/%d paradigms bitwise equal", equal, pairs, lib_equal, lib)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "gradient oracle", gradient_oracle},
      {2, "mirror-descent algebra", mirror_algebra},
      {3, "matching-weights identity", matching_identity},
      {4, "exact vs approximate estimator", estimator_agreement},
      {5, "flip-rate transfer shape", flip_rate_shape},
      {6, "weight identification", weight_identification},
      {7, "task distance self-test and trend", distance_trend},
      {8, "end-to-end determinism", reference_determinism},
      {9, "eta-0 paradigm coincidence", eta_zero_coincidence},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s [%d] %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  std::printf("%d criterion(s) failed\n", failed);
  return failed == 0 ? 0 : 1;
}
