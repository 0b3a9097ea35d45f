#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "zotune/batch.hpp"
#include "zotune/grad_oracle.hpp"
#include "zotune/model.hpp"
#include "zotune/optimizer.hpp"

namespace zotune {

// Population standard deviation over mean; 0 for an empty or zero-mean set.
double coefficient_of_variation(std::span<const double> values);

struct DivergenceTrace {
  Method method = Method::ZoSgd;
  std::vector<std::size_t> iterations;
  std::vector<std::string> layers;
  // gaps[layer][k]: distance of `layer` at record k.
  std::vector<std::vector<double>> gaps;
  // Cross-layer CV of update norms at record k (0 at iteration 0).
  std::vector<double> update_cv;

  // Mean of update_cv over records with iteration > 0.
  double mean_update_cv() const;
};

// Throws StructuralError when records lack per-layer gaps or disagree with
// the layer list, or iterations are not strictly increasing.
DivergenceTrace divergence_trace(const RunLog& log);

// Cross-layer spread of gaps at each record: standard deviation across layers
// divided by the mean final gap (a fixed scale, so fractions of the final
// spread are unaffected by it).
std::vector<double> gap_spread_series(const DivergenceTrace& trace);

// Iteration at which the spread first reaches `fraction` of its final value,
// divided by the final iteration.
double spread_establish_fraction(const DivergenceTrace& trace, double fraction = 0.8);

struct LayerMoment {
  std::string layer;
  std::size_t dim = 0;
  // Empirical E ||g^(l)||^2 over single-query estimates.
  double mean_sq_norm = 0.0;
  // (mean_sq_norm / dim) over the cross-layer mean of that quantity; 1 when
  // every moment is zero.
  double normalized_ratio = 0.0;
};

// n_samples single-query estimates at a fixed point (seeds seed + i).
// params are restored after each probe. Throws ConfigError when
// n_samples < 1000.
std::vector<LayerMoment> variance_symmetry_test(const LossOracle& oracle, ParamSet& params,
                                                const Batch& batch, double eps,
                                                std::size_t n_samples, std::uint64_t seed);

struct StabilityReport {
  std::size_t rows_checked = 0;
  std::size_t violations = 0;
  double min_slack = 0.0;
  double g_max = 0.0;
  double r_max = 0.0;
  // Median over the second half of the rows of lr * ||g_t|| / ||gap_t||.
  double recommended_tau = 0.0;
  // Per row with iteration > 0.
  std::vector<double> slack;
};

// Replays the bound ||theta_{t+1} - theta_t|| <= lr ||g_t|| + tau * R_max from
// logged columns. R is the joint pre-projection gap of the projected layers
// (gap / projection_mag) or of all layers when nothing is projected; R_max is
// its running maximum. Exact when every iteration was logged.
StabilityReport stability_audit(const RunLog& log, double tau);

struct RateFit {
  std::vector<std::size_t> budgets;
  // Estimate of min_t E ||grad L(theta_t)||^2 per budget.
  std::vector<double> values;
  // values ~ C * T^(-alpha).
  double alpha = 0.0;
  double log_intercept = 0.0;
  // RMS residual of the log-log fit.
  double residual = 0.0;
};

// Squared gradient norms at a fixed number of checkpoints for one
// (budget, seed) run.
using BudgetRun = std::function<std::vector<double>(std::size_t budget, std::uint64_t seed)>;

// Least-squares slope of log(value) against log(budget).
RateFit fit_power_law(std::span<const std::size_t> budgets, std::span<const double> values);

// Averages checkpoint values across seeds, takes the minimum over checkpoints
// per budget, then fits. Needs >= 4 budgets spanning at least a decade.
RateFit rate_fit(const BudgetRun& run, std::span<const std::size_t> budgets,
                 std::span<const std::uint64_t> seeds);

struct FoOptions {
  std::size_t eval_every = 1;
  const Batch* eval_batch = nullptr;
  FDSpec fd;
  RecordObserver observer;
  ParamObserver param_observer;
};

// Plain gradient descent with exact (analytic or central-difference)
// gradients, logged in the same schema as the ZO runs. Gaps are measured
// from `init`. Throws ConfigError when finite differences would be needed
// and total_dim > options.fd.max_dim.
RunResult fo_reference_run(const LossOracle& oracle, const ParamSet& init,
                           std::span<const Batch> data, double lr, std::size_t steps,
                           const FoOptions& options = {});

}  // namespace zotune
