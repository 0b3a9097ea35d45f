#pragma once

#include <cstdint>
#include <vector>

#include "zotune/batch.hpp"
#include "zotune/model.hpp"
#include "zotune/param_set.hpp"

namespace zotune {

enum class ScaleConvention { MeanOverQ };

struct SketchQuery {
  std::uint64_t seed = 0;
  double coefficient = 0.0;
};

// A two-point gradient estimate kept as seeds and scalars. The dense estimate
// is sum_i coefficient_i * u_i, with u_i regenerated from seed_i per layer.
// Under MeanOverQ, coefficient_i = (L(x + eps u_i) - L(x - eps u_i)) / (2 eps q).
struct GradSketch {
  std::vector<SketchQuery> queries;
  double eps = 0.0;
  std::size_t q = 0;
  ScaleConvention convention = ScaleConvention::MeanOverQ;
};

struct GradEstimate {
  GradSketch sketch;
  // Mean of the 2q probe losses.
  double probe_loss = 0.0;
};

// Seed of query i for a call seeded with `seed`.
inline std::uint64_t query_seed(std::uint64_t seed, std::size_t i) { return seed + i; }

// Probes L at params +/- eps u_i on the same batch for i < q. params are
// perturbed in place and restored by regenerating u_i (round trip within
// rounding). On a non-finite loss, params are restored and NumericError
// carries the query index.
GradEstimate grad_est(const LossOracle& oracle, ParamSet& params, const Batch& batch, double eps,
                      std::size_t q, std::uint64_t seed);

// Dense estimate laid out like `shape`.
ParamSet materialize(const GradSketch& sketch, const ParamSet& shape);

// params <- params - step * estimate, one layer at a time (extra memory is a
// single layer buffer). Returns step * ||estimate^(l)|| per layer. Throws
// NumericError before touching a layer whose update would be non-finite.
std::vector<double> apply_sketch(ParamSet& params, const GradSketch& sketch, double step);

// ||estimate^(l)|| per layer without materializing the full vector.
std::vector<double> sketch_layer_norms(const GradSketch& sketch, const ParamSet& shape);

}  // namespace zotune
