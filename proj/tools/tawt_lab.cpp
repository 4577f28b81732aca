// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

// tawt_lab: generate task families, run training sweeps, estimate task
// distances and aggregate results.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tawt/harness/commands.hpp"

namespace {

constexpr const char* kFooter = R"(Output files (all floats use 17 significant digits):
  summary.csv   arm,seed,target_size,ratio,flip_rate,final_target_acc,final_target_loss,
                status,error,run_key,timestamp  (timestamp is the only non-deterministic column)
  runs/<key>.metrics.csv  epoch,phase,task,loss,target_acc,target_loss
  runs/<key>.weights.csv  step,w_0..w_T
  distance.csv  flip_rate,seed,source_risk_estimate,oracle_risk_estimate,distance,aux_accuracy
  curves.csv    arm,target_size,ratio,flip_rate,n_seeds,mean_acc,stderr_acc,mean_loss,stderr_loss
  weights_<arm>.csv  target_size,ratio,flip_rate,step,w_0..w_T (mean over seeds)

Exit codes: 0 success, 1 config error, 2 job failures, 3 IO error.
TAWT_LAB_JOBS sets the job count when --jobs is absent.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Target-aware weighted training lab"};
  app.footer(kFooter);
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  int jobs = 0;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> arm;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", config, "experiment config (JSON)");
    if (need_config) c->required();
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--jobs", jobs, "concurrent jobs")->check(CLI::PositiveNumber);
    sub->add_option("--seed-override", seed_override, "replace master_seed");
    sub->add_option("--arm", arm, "run only the named arm");
  };
  auto* gen = app.add_subcommand("generate", "build and cache the task family");
  auto* run = app.add_subcommand("run", "train every (arm x seed x point) job; writes summary.csv");
  auto* dist = app.add_subcommand("distance", "estimate task distances over the flip grid; writes distance.csv");
  auto* rep = app.add_subcommand("report", "aggregate a results directory into curves.csv and weights_<arm>.csv");
  add_common(gen, true);
  add_common(run, true);
  add_common(dist, true);
  add_common(rep, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : tawt::harness::kConfigError;
  }

  using namespace tawt::harness;
  try {
    Options opt;
    opt.out = out;
    opt.jobs = resolve_jobs(jobs);
    opt.seed_override = seed_override;
    opt.arm = arm;
    if (rep->parsed()) {
      std::string dir;
      if (out) dir = *out;
      else if (!config.empty()) dir = load_config(config).output_dir;
      else {
        std::cerr << "report: give --out DIR or --config PATH\n";
        return kConfigError;
      }
      return cmd_report(dir);
    }
    const ExperimentConfig cfg = load_config(config);
    if (gen->parsed()) return cmd_generate(cfg, opt);
    if (run->parsed()) return cmd_run(cfg, opt);
    if (dist->parsed()) return cmd_distance(cfg, opt);
  } catch (const tawt::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const tawt::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kJobFailures;
  }
  return kOk;
}
