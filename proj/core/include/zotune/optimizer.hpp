#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zotune/batch.hpp"
#include "zotune/error.hpp"
#include "zotune/model.hpp"
#include "zotune/param_set.hpp"

namespace zotune {

enum class LrSchedule { Constant, LinearDecay };

std::string_view to_string(LrSchedule schedule);
LrSchedule lr_schedule_from_string(std::string_view name);

struct TrainConfig {
  std::size_t steps = 1000;
  double lr = 1e-3;
  LrSchedule lr_schedule = LrSchedule::Constant;
  double eps = 1e-3;
  std::size_t q = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;

  // Throws ConfigError.
  void validate() const;
};

// Learning rate for iteration t in [0, steps).
double schedule_lr(const TrainConfig& config, std::size_t t);

enum class Method { ZoSgd, Dizo, FoReference };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

// Metrics for iteration `iteration` (0 is the starting point; iteration t
// describes the transition into theta_t). Per-layer vectors follow
// RunLog::layers, projection_mag follows RunLog::projected_layers.
struct RunRecord {
  std::size_t iteration = 0;
  double loss_clean = 0.0;
  double loss_probe = 0.0;
  double lr = 0.0;
  // ||theta_t - theta_{t-1}||.
  double step_movement = 0.0;
  // lr * ||g|| + tau * R_max - step_movement, >= -1e-6 when the bound holds.
  double stability_slack = 0.0;
  // Distance to the gap reference (anchor, or the starting point).
  std::vector<double> gap;
  // ||lr * g^(l)|| of the gradient step (before any projection).
  std::vector<double> update_norm;
  // Magnitude applied at this iteration; 1 when no projection happened.
  std::vector<double> projection_mag;

  bool operator==(const RunRecord&) const = default;
};

struct RunStats {
  std::size_t stability_violations = 0;
  double min_slack = 0.0;
  // Running maxima: ||g_t|| and the joint pre-projection gap of the
  // projected layers.
  double g_max = 0.0;
  double r_max = 0.0;
  std::size_t forward_passes = 0;
  std::size_t projection_cycles = 0;
  std::size_t projection_failures = 0;
};

struct RunLog {
  Method method = Method::ZoSgd;
  double tau = 0.0;
  std::vector<std::string> layers;
  std::vector<std::string> projected_layers;
  std::vector<RunRecord> records;
  RunStats stats;
};

struct RunResult {
  ParamSet params;
  RunLog log;
};

// Thrown when a run hits a non-finite value; carries everything logged up to
// the last good iteration.
class RunAborted : public NumericError {
 public:
  RunAborted(const std::string& what, RunLog partial)
      : NumericError(what), partial_(std::move(partial)) {}
  const RunLog& partial() const { return partial_; }

 private:
  RunLog partial_;
};

// Observers see every emitted record and cannot change the run.
using RecordObserver = std::function<void(const RunRecord&)>;
// Read-only view of theta_t at every emitted record.
using ParamObserver = std::function<void(std::size_t iteration, const ParamSet&)>;

// Violation threshold for the online stability check.
inline constexpr double kStabilitySlackTolerance = 1e-6;

struct StepContext {
  std::size_t iteration = 0;
  std::uint64_t run_seed = 0;
  const Batch* batch = nullptr;
};

struct AdjustOutcome {
  std::vector<double> magnitudes;
  std::size_t forward_passes = 0;
  bool failed = false;
};

// Hook run after every gradient step; DiZO's projection plugs in here.
class StepAdjuster {
 public:
  virtual ~StepAdjuster() = default;
  virtual std::vector<std::string> layer_names() const = 0;
  virtual double clip_width() const = 0;
  // Distances of the adjusted layers from their reference.
  virtual std::vector<double> gaps(const ParamSet& params) const = 0;
  // nullopt when the hook does nothing at this iteration.
  virtual std::optional<AdjustOutcome> adjust(ParamSet& params, const StepContext& context) = 0;
};

struct LoopOptions {
  Method method = Method::ZoSgd;
  // Reference for the per-layer gap columns; the starting point when null.
  const ParamSet* gap_reference = nullptr;
  StepAdjuster* adjuster = nullptr;
  // Batch for loss_clean; the current training batch when null.
  const Batch* eval_batch = nullptr;
  RecordObserver observer;
  ParamObserver param_observer;
};

// theta_{t+1} = theta_t - lr_t * g_t over T = config.steps iterations, cycling
// through `data`, then the optional adjuster. Deterministic in config.seed.
RunResult run_zo_loop(const LossOracle& oracle, const ParamSet& init,
                      std::span<const Batch> data, const TrainConfig& config,
                      const LoopOptions& options);

RunResult zo_sgd_run(const LossOracle& oracle, const ParamSet& init, std::span<const Batch> data,
                     const TrainConfig& config, const RecordObserver& observer = {},
                     const Batch* eval_batch = nullptr);

// Seed used by the gradient estimator at iteration t (1-based).
std::uint64_t iteration_seed(std::uint64_t run_seed, std::size_t t);

}  // namespace zotune
