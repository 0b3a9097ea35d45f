// zotune: run and inspect zeroth-order fine-tuning experiments.
//
//   zotune run <config>            all (method, seed) arms -> CSV, summary, manifest
//   zotune compare <summary...>    iterations-to-threshold and forward-pass table
//   zotune audit <csv> [--tau T]   replay the stability bound from a run CSV
//   zotune varsym <config>         per-layer second moments of the estimator
//   zotune rate <config>           fitted decay exponent of min ||grad||^2
//
// Exit codes: 0 ok, 1 configuration or input error, 2 numeric failure.
// ZOTUNE_WORKERS sets the number of arms run in parallel.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "zotune/analyzer.hpp"
#include "zotune/error.hpp"
#include "zotune/harness/config.hpp"
#include "zotune/harness/experiment.hpp"
#include "zotune/harness/records_csv.hpp"
#include "zotune/version.hpp"

namespace {

using namespace zotune;
using namespace zotune::harness;

int cmd_run(const std::string& path) {
  const auto config = load_config(path);
  const auto workers = worker_count_from_env();
  const auto summary = run_experiment(config, workers);
  for (const auto& arm : summary.arms) {
    const auto iters = arm.iterations_to_threshold
                           ? fmt::format("{}", *arm.iterations_to_threshold)
                           : std::string("DNF");
    fmt::print("{:<24} final_loss {:<12.6g} to_threshold {:<8} violations {}\n",
               ArmSpec{arm.method, arm.seed}.name(), arm.final_loss, iters,
               arm.stability_violations);
  }
  const auto failed = summary.failed();
  if (!failed.empty()) {
    for (const auto* arm : failed) {
      fmt::print(stderr, "error: arm {} failed: {}\n", ArmSpec{arm->method, arm->seed}.name(),
                 arm->error);
    }
    return 2;
  }
  fmt::print("wrote {}\n", config.output_dir.string());
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths) {
  std::vector<ExperimentSummary> summaries;
  for (const auto& p : paths) summaries.push_back(load_summary(p));
  const auto report = compare_arms(summaries);
  fmt::print("{}", format_report(report));
  return 0;
}

int cmd_audit(const std::string& path, double tau) {
  const auto log = read_records_csv(path);
  const auto report = stability_audit(log, tau);
  fmt::print("rows {}\nviolations {}\nmin_slack {:.6g}\ng_max {:.6g}\nr_max {:.6g}\n"
             "recommended_tau {:.6g}\n",
             report.rows_checked, report.violations, report.min_slack, report.g_max,
             report.r_max, report.recommended_tau);
  return 0;
}

int cmd_varsym(const std::string& path) {
  const auto config = load_config(path);
  const auto moments = run_varsym(config);
  fmt::print("{:<20} {:>8} {:>16} {:>10}\n", "layer", "dim", "E||g||^2", "ratio");
  for (const auto& m : moments) {
    fmt::print("{:<20} {:>8} {:>16.6g} {:>10.4f}\n", m.layer, m.dim, m.mean_sq_norm,
               m.normalized_ratio);
  }
  return 0;
}

int cmd_rate(const std::string& path) {
  const auto config = load_config(path);
  const auto fit = run_rate(config);
  for (std::size_t i = 0; i < fit.budgets.size(); ++i) {
    fmt::print("T {:<8} min ||grad||^2 {:.6g}\n", fit.budgets[i], fit.values[i]);
  }
  fmt::print("alpha {:.4f}\nresidual {:.4f}\n", fit.alpha, fit.residual);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zeroth-order fine-tuning experiments"};
  app.set_version_flag("--version", fmt::format("zotune {} ({})", zotune::version(),
                                                zotune::git_revision()));
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run every arm of an experiment");
  run->add_option("config", config_path, "experiment config")->required();

  std::vector<std::string> summaries;
  auto* compare = app.add_subcommand("compare", "compare arms across summary files");
  compare->add_option("summaries", summaries, "summary.json files")->required();

  std::string csv_path;
  double tau = 0.2;
  auto* audit = app.add_subcommand("audit", "replay the stability bound from a run CSV");
  audit->add_option("csv", csv_path, "run CSV")->required();
  audit->add_option("--tau", tau, "clip width")->capture_default_str();

  auto* varsym = app.add_subcommand("varsym", "variance-symmetry test");
  varsym->add_option("config", config_path, "experiment config")->required();

  auto* rate = app.add_subcommand("rate", "convergence-rate fit");
  rate->add_option("config", config_path, "experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*compare) return cmd_compare(summaries);
    if (*audit) return cmd_audit(csv_path, tau);
    if (*varsym) return cmd_varsym(config_path);
    if (*rate) return cmd_rate(config_path);
  } catch (const zotune::NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
