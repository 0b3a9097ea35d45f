#include "zotune/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "zotune/estimator.hpp"

namespace zotune {

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::Constant ? "constant" : "linear_decay";
}

LrSchedule lr_schedule_from_string(std::string_view name) {
  if (name == "constant") return LrSchedule::Constant;
  if (name == "linear_decay" || name == "linear") return LrSchedule::LinearDecay;
  throw ConfigError(fmt::format("unknown lr schedule '{}'", name));
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::ZoSgd: return "zo_sgd";
    case Method::Dizo: return "dizo";
    case Method::FoReference: return "fo_ref";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  if (name == "zo_sgd") return Method::ZoSgd;
  if (name == "dizo") return Method::Dizo;
  if (name == "fo_ref") return Method::FoReference;
  throw ConfigError(fmt::format("unknown method '{}'", name));
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and >= 0");
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("train.eps must be > 0");
  if (q < 1) throw ConfigError("train.q must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
}

double schedule_lr(const TrainConfig& config, std::size_t t) {
  switch (config.lr_schedule) {
    case LrSchedule::Constant:
      return config.lr;
    case LrSchedule::LinearDecay:
      return config.lr *
             (1.0 - static_cast<double>(t) / static_cast<double>(config.steps));
  }
  return config.lr;
}

std::uint64_t iteration_seed(std::uint64_t run_seed, std::size_t t) {
  return derive_seed(run_seed, t);
}

RunResult run_zo_loop(const LossOracle& oracle, const ParamSet& init,
                      std::span<const Batch> data, const TrainConfig& config,
                      const LoopOptions& options) {
  config.validate();
  if (data.empty()) throw ConfigError("training needs at least one batch");
  require_same_shape(init, oracle.param_template(), "run init");
  const ParamSet& reference = options.gap_reference ? *options.gap_reference : init;
  require_same_shape(init, reference, "gap reference");

  RunResult result{init, {}};
  ParamSet& params = result.params;
  RunLog& log = result.log;
  log.method = options.method;
  for (const auto& spec : params.specs()) log.layers.push_back(spec.name);
  StepAdjuster* adjuster = options.adjuster;
  if (adjuster) {
    log.projected_layers = adjuster->layer_names();
    log.tau = adjuster->clip_width();
  }
  const std::size_t n_proj = log.projected_layers.size();
  log.stats.min_slack = std::numeric_limits<double>::infinity();

  auto clean_loss = [&](const Batch& current) {
    return oracle.evaluate(params, options.eval_batch ? *options.eval_batch : current);
  };
  auto emit = [&](RunRecord record) {
    if (options.observer) options.observer(record);
    if (options.param_observer) options.param_observer(record.iteration, params);
    log.records.push_back(std::move(record));
  };

  {
    RunRecord first;
    first.loss_clean = clean_loss(data.front());
    first.loss_probe = first.loss_clean;
    first.lr = schedule_lr(config, 0);
    first.gap = layer_distances(params, reference);
    first.update_norm.assign(params.layer_count(), 0.0);
    first.projection_mag.assign(n_proj, 1.0);
    emit(std::move(first));
  }

  ParamSet previous = params;
  for (std::size_t t = 1; t <= config.steps; ++t) {
    const Batch& batch = data[(t - 1) % data.size()];
    const double lr = schedule_lr(config, t - 1);
    std::copy(params.flat().begin(), params.flat().end(), previous.flat().begin());

    GradEstimate estimate;
    std::vector<double> update;
    try {
      estimate = grad_est(oracle, params, batch, config.eps, config.q, iteration_seed(config.seed, t));
      update = apply_sketch(params, estimate.sketch, lr);
    } catch (const NumericError& e) {
      throw RunAborted(fmt::format("iteration {}: {}", t, e.what()), std::move(log));
    }
    log.stats.forward_passes += 2 * config.q;
    const double step_norm = l2_norm(update);

    std::vector<double> magnitudes(n_proj, 1.0);
    double tau = 0.0;
    if (adjuster) {
      tau = adjuster->clip_width();
      log.stats.r_max = std::max(log.stats.r_max, l2_norm(adjuster->gaps(params)));
      StepContext context{t, config.seed, &batch};
      if (auto outcome = adjuster->adjust(params, context)) {
        ++log.stats.projection_cycles;
        log.stats.forward_passes += outcome->forward_passes;
        if (outcome->failed) ++log.stats.projection_failures;
        magnitudes = std::move(outcome->magnitudes);
      }
    }
    if (!all_finite(params.flat())) {
      throw RunAborted(fmt::format("iteration {}: parameters became non-finite", t), std::move(log));
    }

    const double movement = l2_distance(params.flat(), previous.flat());
    const double slack = step_norm + tau * log.stats.r_max - movement;
    if (slack < -kStabilitySlackTolerance) ++log.stats.stability_violations;
    log.stats.min_slack = std::min(log.stats.min_slack, slack);
    if (lr > 0.0) log.stats.g_max = std::max(log.stats.g_max, step_norm / lr);

    if (t % config.eval_every == 0 || t == config.steps) {
      RunRecord record;
      record.iteration = t;
      try {
        record.loss_clean = clean_loss(batch);
      } catch (const NumericError& e) {
        throw RunAborted(fmt::format("iteration {}: {}", t, e.what()), std::move(log));
      }
      record.loss_probe = estimate.probe_loss;
      record.lr = lr;
      record.step_movement = movement;
      record.stability_slack = slack;
      record.gap = layer_distances(params, reference);
      record.update_norm = std::move(update);
      record.projection_mag = std::move(magnitudes);
      emit(std::move(record));
    }
  }
  return result;
}

RunResult zo_sgd_run(const LossOracle& oracle, const ParamSet& init, std::span<const Batch> data,
                     const TrainConfig& config, const RecordObserver& observer,
                     const Batch* eval_batch) {
  LoopOptions options;
  options.method = Method::ZoSgd;
  options.eval_batch = eval_batch;
  options.observer = observer;
  return run_zo_loop(oracle, init, data, config, options);
}

}  // namespace zotune
