#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zotune/analyzer.hpp"
#include "zotune/harness/config.hpp"
#include "zotune/harness/tasks.hpp"
#include "zotune/optimizer.hpp"

namespace zotune::harness {

struct ArmSpec {
  Method method = Method::ZoSgd;
  std::uint64_t seed = 0;

  // "<method>_seed<seed>", the stem of the arm's output files.
  std::string name() const;
};

// Every (method, seed) pair, methods outermost.
std::vector<ArmSpec> expand_arms(const ExperimentConfig& config);

struct ArmSummary {
  Method method = Method::ZoSgd;
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string error;
  std::size_t steps = 0;
  std::size_t q = 0;
  std::size_t kappa = 0;
  std::size_t inner_iters = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::optional<double> final_accuracy;
  double threshold_loss = 0.0;
  // First logged iteration with loss_clean <= threshold_loss; unset = DNF.
  std::optional<std::size_t> iterations_to_threshold;
  std::size_t forward_passes = 0;
  std::size_t projection_cycles = 0;
  std::size_t projection_failures = 0;
  std::size_t stability_violations = 0;
  double min_slack = 0.0;
  // Extremes of the logged projection magnitudes (1 when none).
  double min_projection_mag = 1.0;
  double max_projection_mag = 1.0;
};

struct ArmResult {
  ArmSpec spec;
  RunLog log;
  std::optional<ParamSet> params;
  ArmSummary summary;
};

// Runs one arm in memory. A numeric failure is recorded in the summary
// (aborted = true) together with the partial log; config errors propagate.
ArmResult run_arm(const ExperimentConfig& config, const ArmSpec& spec);

struct ExperimentSummary {
  TaskKind task = TaskKind::QuadraticHetero;
  double threshold_fraction = 0.1;
  std::optional<double> threshold_loss;
  std::vector<ArmSummary> arms;

  std::vector<const ArmSummary*> failed() const;
};

nlohmann::json to_json(const ArmSummary& arm);
nlohmann::json to_json(const ExperimentSummary& summary);
// Throws ConfigError on a malformed document.
ExperimentSummary summary_from_json(const nlohmann::json& j);
ExperimentSummary load_summary(const std::filesystem::path& path);

// Parsed ZOTUNE_WORKERS, or the hardware concurrency when unset. Throws
// ConfigError on a value that is not a positive integer.
std::size_t worker_count_from_env();

// Runs every arm on a pool of `workers` threads and writes, under
// config.output_dir: <arm>.csv and <arm>.ckpt per arm, summary.json and
// manifest.json. Arms that fail numerically still get their partial CSV.
ExperimentSummary run_experiment(const ExperimentConfig& config, std::size_t workers);

// Resolved config plus code and RNG identification; no timestamps.
nlohmann::json make_manifest(const ExperimentConfig& config);

// 2 q T + 2 inner_iters floor(T / kappa) for dizo, 2 q T otherwise.
std::size_t expected_forward_passes(Method method, std::size_t steps, std::size_t q,
                                    std::size_t kappa, std::size_t inner_iters);

struct MethodComparison {
  Method method = Method::ZoSgd;
  // Per seed; unset = DNF.
  std::vector<std::pair<std::uint64_t, std::optional<std::size_t>>> iterations;
  std::optional<double> median_iterations;
  double median_final_loss = 0.0;
  std::size_t dnf = 0;
  std::size_t forward_passes = 0;
  std::size_t expected_forward_passes = 0;
};

struct CompareReport {
  TaskKind task = TaskKind::QuadraticHetero;
  std::vector<MethodComparison> methods;
  // median(dizo) / median(zo_sgd) over non-DNF arms.
  std::optional<double> dizo_over_zo;
  std::vector<std::string> warnings;
};

// Needs >= 2 arms sharing a task and threshold; throws ConfigError otherwise.
CompareReport compare_arms(const std::vector<ExperimentSummary>& summaries);
std::string format_report(const CompareReport& report);

double median(std::vector<double> values);

// Variance-symmetry test at the task's starting point for the first seed,
// on the first training batch.
std::vector<LayerMoment> run_varsym(const ExperimentConfig& config);

// ZO-SGD with lr = rate.lr0 / sqrt(T) for every budget T and rate.seeds
// seeds, recording ||grad L||^2 on the eval batch at rate.checkpoints
// evenly spaced iterations after the start. `on_run` sees each run's log.
RateFit run_rate(const ExperimentConfig& config,
                 const std::function<void(const RunLog&)>& on_run = {});

}  // namespace zotune::harness
