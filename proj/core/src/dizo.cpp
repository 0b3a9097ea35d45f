#include "zotune/dizo.hpp"

#include "zotune/rng.hpp"

namespace zotune {

namespace {
constexpr std::uint64_t kProjectionSalt = 0x70726F6A65637421ULL;
}  // namespace

std::uint64_t projection_seed(std::uint64_t run_seed, std::size_t t) {
  return derive_seed(run_seed ^ kProjectionSalt, t);
}

ProjectionAdjuster::ProjectionAdjuster(const LossOracle& oracle, const AnchorStore& anchor,
                                       const ProjectionConfig& config)
    : oracle_(oracle), anchor_(anchor), state_(ProjectionState::for_anchor(anchor, config)) {}

std::vector<double> ProjectionAdjuster::gaps(const ParamSet& params) const {
  return anchored_gaps(params, anchor_);
}

std::optional<AdjustOutcome> ProjectionAdjuster::adjust(ParamSet& params,
                                                        const StepContext& context) {
  if (context.iteration % state_.config.kappa != 0) return std::nullopt;
  const auto learned = learn_projection(oracle_, params, anchor_, state_, *context.batch,
                                        projection_seed(context.run_seed, context.iteration));
  AdjustOutcome outcome;
  outcome.forward_passes = 2 * state_.config.inner_iters;
  if (learned.aborted) {
    outcome.failed = true;
    outcome.magnitudes.assign(state_.gamma.size(), 1.0);
    return outcome;
  }
  outcome.magnitudes = apply_projection(params, anchor_, state_);
  return outcome;
}

RunResult dizo_run(const LossOracle& oracle, const ParamSet& init, std::span<const Batch> data,
                   const TrainConfig& config, const ProjectionConfig& projection,
                   const AnchorStore& anchor, const RecordObserver& observer,
                   const Batch* eval_batch) {
  ProjectionAdjuster adjuster(oracle, anchor, projection);
  const ParamSet reference = overlay_anchor(init, anchor);
  LoopOptions options;
  options.method = Method::Dizo;
  options.gap_reference = &reference;
  options.adjuster = &adjuster;
  options.eval_batch = eval_batch;
  options.observer = observer;
  return run_zo_loop(oracle, init, data, config, options);
}

}  // namespace zotune
