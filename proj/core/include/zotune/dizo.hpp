#pragma once

#include <span>

#include "zotune/anchor.hpp"
#include "zotune/optimizer.hpp"
#include "zotune/projection.hpp"

namespace zotune {

// Seed of the projection search triggered at iteration t.
std::uint64_t projection_seed(std::uint64_t run_seed, std::size_t t);

// Projection hook: every kappa iterations re-initializes gamma, learns it on
// the current batch and applies it.
class ProjectionAdjuster final : public StepAdjuster {
 public:
  ProjectionAdjuster(const LossOracle& oracle, const AnchorStore& anchor,
                     const ProjectionConfig& config);

  std::vector<std::string> layer_names() const override { return state_.layers; }
  double clip_width() const override { return state_.config.tau; }
  std::vector<double> gaps(const ParamSet& params) const override;
  std::optional<AdjustOutcome> adjust(ParamSet& params, const StepContext& context) override;

  const ProjectionState& state() const { return state_; }

 private:
  const LossOracle& oracle_;
  const AnchorStore& anchor_;
  ProjectionState state_;
};

// ZO-SGD with anchored projections. Gap columns are measured against the
// anchor (reconstructed) for anchored layers and against `init` otherwise.
// With kappa > steps the parameter trajectory equals zo_sgd_run's bit for bit.
RunResult dizo_run(const LossOracle& oracle, const ParamSet& init, std::span<const Batch> data,
                   const TrainConfig& config, const ProjectionConfig& projection,
                   const AnchorStore& anchor, const RecordObserver& observer = {},
                   const Batch* eval_batch = nullptr);

}  // namespace zotune
