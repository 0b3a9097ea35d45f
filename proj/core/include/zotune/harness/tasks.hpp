#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "zotune/batch.hpp"
#include "zotune/harness/config.hpp"
#include "zotune/model.hpp"
#include "zotune/param_set.hpp"

namespace zotune::harness {

// A concrete problem for one seed: model, training batches, the batch used
// for loss_clean, and the starting point.
struct TaskInstance {
  std::unique_ptr<LossOracle> oracle;
  std::vector<Batch> train;
  Batch eval;
  ParamSet init;
  // Anchored roles when the config does not name any.
  std::vector<Role> default_roles;
};

// Deterministic in (config, seed). A warm-start checkpoint replaces the
// model's initialization. Throws ConfigError on invalid task options.
TaskInstance make_task(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace zotune::harness
