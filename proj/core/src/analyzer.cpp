#include "zotune/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "zotune/error.hpp"
#include "zotune/estimator.hpp"

namespace zotune {

double coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / n) / mean;
}

double DivergenceTrace::mean_update_cv() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < iterations.size(); ++k) {
    if (iterations[k] == 0) continue;
    sum += update_cv[k];
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

DivergenceTrace divergence_trace(const RunLog& log) {
  DivergenceTrace trace;
  trace.method = log.method;
  trace.layers = log.layers;
  trace.gaps.assign(log.layers.size(), {});
  std::size_t previous = 0;
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto& record = log.records[k];
    if (record.gap.size() != log.layers.size() || record.update_norm.size() != log.layers.size()) {
      throw StructuralError(
          fmt::format("record {} lacks per-layer gaps or update norms", record.iteration));
    }
    if (k > 0 && record.iteration <= previous) {
      throw StructuralError("record iterations are not strictly increasing");
    }
    previous = record.iteration;
    trace.iterations.push_back(record.iteration);
    for (std::size_t l = 0; l < log.layers.size(); ++l) trace.gaps[l].push_back(record.gap[l]);
    trace.update_cv.push_back(coefficient_of_variation(record.update_norm));
  }
  return trace;
}

std::vector<double> gap_spread_series(const DivergenceTrace& trace) {
  const std::size_t n_layers = trace.layers.size();
  const std::size_t n = trace.iterations.size();
  std::vector<double> out(n, 0.0);
  if (n_layers == 0 || n == 0) return out;
  double final_mean = 0.0;
  for (const auto& series : trace.gaps) final_mean += series.back();
  final_mean /= static_cast<double>(n_layers);
  const double scale = final_mean > 0.0 ? final_mean : 1.0;
  std::vector<double> column(n_layers);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n_layers; ++l) column[l] = trace.gaps[l][k];
    const double mean = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(n_layers);
    double var = 0.0;
    for (double v : column) var += (v - mean) * (v - mean);
    out[k] = std::sqrt(var / static_cast<double>(n_layers)) / scale;
  }
  return out;
}

double spread_establish_fraction(const DivergenceTrace& trace, double fraction) {
  const auto spread = gap_spread_series(trace);
  if (spread.empty() || trace.iterations.back() == 0) return 0.0;
  const double target = fraction * spread.back();
  for (std::size_t k = 0; k < spread.size(); ++k) {
    if (spread[k] >= target) {
      return static_cast<double>(trace.iterations[k]) /
             static_cast<double>(trace.iterations.back());
    }
  }
  return 1.0;
}

std::vector<LayerMoment> variance_symmetry_test(const LossOracle& oracle, ParamSet& params,
                                                const Batch& batch, double eps,
                                                std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1000) throw ConfigError("variance_symmetry_test needs n_samples >= 1000");
  const std::size_t n_layers = params.layer_count();
  std::vector<double> sums(n_layers, 0.0);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto estimate = grad_est(oracle, params, batch, eps, 1, seed + i);
    const auto norms = sketch_layer_norms(estimate.sketch, params);
    for (std::size_t l = 0; l < n_layers; ++l) sums[l] += norms[l] * norms[l];
  }
  std::vector<LayerMoment> out(n_layers);
  double per_dim_mean = 0.0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    out[l].layer = params.spec(l).name;
    out[l].dim = params.spec(l).dim;
    out[l].mean_sq_norm = sums[l] / static_cast<double>(n_samples);
    per_dim_mean += out[l].mean_sq_norm / static_cast<double>(out[l].dim);
  }
  per_dim_mean /= static_cast<double>(n_layers);
  for (auto& m : out) {
    m.normalized_ratio =
        per_dim_mean > 0.0 ? (m.mean_sq_norm / static_cast<double>(m.dim)) / per_dim_mean : 1.0;
  }
  return out;
}

StabilityReport stability_audit(const RunLog& log, double tau) {
  StabilityReport report;
  report.min_slack = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> projected;
  for (const auto& name : log.projected_layers) {
    const auto it = std::find(log.layers.begin(), log.layers.end(), name);
    if (it == log.layers.end()) {
      throw StructuralError(fmt::format("projected layer '{}' has no gap column", name));
    }
    projected.push_back(static_cast<std::size_t>(it - log.layers.begin()));
  }
  std::vector<double> tau_estimates;
  for (const auto& record : log.records) {
    if (record.iteration == 0) continue;
    if (record.gap.size() != log.layers.size() || record.update_norm.size() != log.layers.size() ||
        record.projection_mag.size() != projected.size()) {
      throw StructuralError(fmt::format("record {} has inconsistent columns", record.iteration));
    }
    double step_sq = 0.0;
    for (double u : record.update_norm) step_sq += u * u;
    const double step_norm = std::sqrt(step_sq);

    double r_sq = 0.0;
    if (projected.empty()) {
      for (double g : record.gap) r_sq += g * g;
    } else {
      for (std::size_t p = 0; p < projected.size(); ++p) {
        const double mag = record.projection_mag[p];
        const double pre = mag != 0.0 ? record.gap[projected[p]] / std::fabs(mag) : 0.0;
        r_sq += pre * pre;
      }
    }
    const double r = std::sqrt(r_sq);
    report.r_max = std::max(report.r_max, r);
    if (record.lr > 0.0) report.g_max = std::max(report.g_max, step_norm / record.lr);

    const double slack = step_norm + tau * report.r_max - record.step_movement;
    report.slack.push_back(slack);
    report.min_slack = std::min(report.min_slack, slack);
    if (slack < -kStabilitySlackTolerance) ++report.violations;
    ++report.rows_checked;
    tau_estimates.push_back(r > 0.0 ? step_norm / r : 0.0);
  }
  if (report.rows_checked == 0) report.min_slack = 0.0;
  if (!tau_estimates.empty()) {
    std::vector<double> tail(tau_estimates.begin() + static_cast<std::ptrdiff_t>(tau_estimates.size() / 2),
                             tau_estimates.end());
    std::nth_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(tail.size() / 2), tail.end());
    report.recommended_tau = tail[tail.size() / 2];
  }
  return report;
}

RateFit fit_power_law(std::span<const std::size_t> budgets, std::span<const double> values) {
  if (budgets.size() != values.size() || budgets.size() < 2) {
    throw ConfigError("power-law fit needs matching budgets and values (>= 2)");
  }
  RateFit fit;
  fit.budgets.assign(budgets.begin(), budgets.end());
  fit.values.assign(values.begin(), values.end());
  const std::size_t n = budgets.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(values[i] > 0.0) || budgets[i] == 0) {
      throw NumericError("power-law fit needs positive budgets and values");
    }
    x[i] = std::log(static_cast<double>(budgets[i]));
    y[i] = std::log(values[i]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ConfigError("power-law fit needs distinct budgets");
  const double slope = sxy / sxx;
  fit.alpha = -slope;
  fit.log_intercept = my - slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.log_intercept + slope * x[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

RateFit rate_fit(const BudgetRun& run, std::span<const std::size_t> budgets,
                 std::span<const std::uint64_t> seeds) {
  if (budgets.size() < 4) throw ConfigError("rate_fit needs at least 4 budgets");
  const auto [lo, hi] = std::minmax_element(budgets.begin(), budgets.end());
  if (*lo == 0 || *hi < 10 * *lo) throw ConfigError("rate_fit budgets must span at least a decade");
  if (seeds.empty()) throw ConfigError("rate_fit needs at least one seed");

  std::vector<double> values;
  for (std::size_t budget : budgets) {
    std::vector<double> mean;
    for (std::uint64_t seed : seeds) {
      const auto checkpoints = run(budget, seed);
      if (checkpoints.empty()) throw StructuralError("rate_fit run returned no checkpoints");
      if (mean.empty()) mean.assign(checkpoints.size(), 0.0);
      if (checkpoints.size() != mean.size()) {
        throw StructuralError("rate_fit runs must return the same number of checkpoints");
      }
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += checkpoints[c];
    }
    for (double& m : mean) m /= static_cast<double>(seeds.size());
    values.push_back(*std::min_element(mean.begin(), mean.end()));
  }
  return fit_power_law(budgets, values);
}

RunResult fo_reference_run(const LossOracle& oracle, const ParamSet& init,
                           std::span<const Batch> data, double lr, std::size_t steps,
                           const FoOptions& options) {
  if (steps < 1) throw ConfigError("fo_reference_run: steps must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("fo_reference_run: lr must be >= 0");
  if (data.empty()) throw ConfigError("fo_reference_run needs at least one batch");
  if (options.eval_every < 1) throw ConfigError("fo_reference_run: eval_every must be >= 1");
  if (!oracle.has_analytic_gradient() && init.total_dim() > options.fd.max_dim) {
    throw ConfigError(fmt::format("fo_reference_run: total_dim {} exceeds the finite-difference "
                                  "budget of {}",
                                  init.total_dim(), options.fd.max_dim));
  }
  require_same_shape(init, oracle.param_template(), "fo_reference_run init");

  RunResult result{init, {}};
  ParamSet& params = result.params;
  RunLog& log = result.log;
  log.method = Method::FoReference;
  for (const auto& spec : params.specs()) log.layers.push_back(spec.name);
  log.stats.min_slack = std::numeric_limits<double>::infinity();
  const std::size_t per_step_passes =
      oracle.has_analytic_gradient() ? 1 : 2 * params.total_dim();

  auto emit = [&](RunRecord record) {
    if (options.observer) options.observer(record);
    if (options.param_observer) options.param_observer(record.iteration, params);
    log.records.push_back(std::move(record));
  };
  auto clean = [&](const Batch& current) {
    return oracle.evaluate(params, options.eval_batch ? *options.eval_batch : current);
  };

  {
    RunRecord first;
    first.loss_clean = clean(data.front());
    first.loss_probe = first.loss_clean;
    first.lr = lr;
    first.gap.assign(params.layer_count(), 0.0);
    first.update_norm.assign(params.layer_count(), 0.0);
    emit(std::move(first));
  }

  for (std::size_t t = 1; t <= steps; ++t) {
    const Batch& batch = data[(t - 1) % data.size()];
    double probe = 0.0;
    ParamSet grad;
    try {
      probe = oracle.evaluate(params, batch);
      grad = reference_gradient(oracle, params, batch, options.fd);
    } catch (const NumericError& e) {
      throw RunAborted(fmt::format("iteration {}: {}", t, e.what()), std::move(log));
    }
    log.stats.forward_passes += per_step_passes;
    std::vector<double> update(params.layer_count());
    double movement_sq = 0.0;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      auto x = params.values(l);
      const auto g = grad.values(l);
      double sq = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double before = x[i];
        const double step = lr * g[i];
        x[i] = before - step;
        sq += step * step;
        const double moved = x[i] - before;
        movement_sq += moved * moved;
      }
      update[l] = std::sqrt(sq);
    }
    if (!all_finite(params.flat())) {
      throw RunAborted(fmt::format("iteration {}: parameters became non-finite", t), std::move(log));
    }
    const double step_norm = l2_norm(update);
    const double movement = std::sqrt(movement_sq);
    const double slack = step_norm - movement;
    if (slack < -kStabilitySlackTolerance) ++log.stats.stability_violations;
    log.stats.min_slack = std::min(log.stats.min_slack, slack);
    if (lr > 0.0) log.stats.g_max = std::max(log.stats.g_max, step_norm / lr);

    if (t % options.eval_every == 0 || t == steps) {
      RunRecord record;
      record.iteration = t;
      record.loss_clean = clean(batch);
      record.loss_probe = probe;
      record.lr = lr;
      record.step_movement = movement;
      record.stability_slack = slack;
      record.gap = layer_distances(params, init);
      record.update_norm = std::move(update);
      emit(std::move(record));
    }
  }
  return result;
}

}  // namespace zotune
