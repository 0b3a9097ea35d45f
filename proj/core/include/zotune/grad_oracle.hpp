#pragma once

#include "zotune/batch.hpp"
#include "zotune/model.hpp"
#include "zotune/param_set.hpp"

namespace zotune {

// Central differences with h = base * (1 + |x|) per coordinate.
struct FDSpec {
  double base = 1e-5;
  // Refuse models larger than this (each coordinate costs two evaluations).
  std::size_t max_dim = 5000;
};

// Brute-force gradient. Each coordinate is saved and restored by assignment,
// so params are bitwise unchanged afterwards. Test and reference use only.
// Throws ConfigError when total_dim > spec.max_dim or base <= 0.
ParamSet fd_gradient(const LossOracle& oracle, ParamSet& params, const Batch& batch,
                     const FDSpec& spec = {});

// (L(theta + h u) - L(theta - h u)) / (2h). params are restored by assignment.
double directional_derivative(const LossOracle& oracle, ParamSet& params, const Batch& batch,
                              const ParamSet& direction, double h);

// Analytic gradient when the model has one, central differences otherwise.
ParamSet reference_gradient(const LossOracle& oracle, ParamSet& params, const Batch& batch,
                            const FDSpec& spec = {});

}  // namespace zotune
