#include "zotune/estimator.hpp"

#include <cmath>

#include <fmt/format.h>

#include "zotune/error.hpp"

namespace zotune {

namespace {

// Accumulates sum_i coefficient_i * u_i^(layer) into `out`.
void layer_estimate(const GradSketch& sketch, const ParamSet& shape, std::size_t layer,
                    std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const auto& name = shape.spec(layer).name;
  for (const auto& query : sketch.queries) {
    LayerNoise noise(query.seed, name);
    for (double& x : out) x += query.coefficient * noise.next();
  }
}

}  // namespace

GradEstimate grad_est(const LossOracle& oracle, ParamSet& params, const Batch& batch, double eps,
                      std::size_t q, std::uint64_t seed) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("grad_est: eps must be > 0");
  if (q == 0) throw ConfigError("grad_est: q must be >= 1");
  if (!all_finite(params.flat())) throw NumericError("grad_est: parameters are not finite");

  GradEstimate result;
  result.sketch.eps = eps;
  result.sketch.q = q;
  result.sketch.queries.reserve(q);
  double probe_sum = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    const std::uint64_t s = query_seed(seed, i);
    double plus = 0.0;
    double minus = 0.0;
    perturb_in_place(params, {s, eps});
    try {
      plus = oracle.evaluate(params, batch);
    } catch (const NumericError&) {
      perturb_in_place(params, {s, -eps});
      throw NumericError(fmt::format("grad_est: non-finite loss at +eps probe of query {}", i), i);
    }
    perturb_in_place(params, {s, -2.0 * eps});
    try {
      minus = oracle.evaluate(params, batch);
    } catch (const NumericError&) {
      perturb_in_place(params, {s, eps});
      throw NumericError(fmt::format("grad_est: non-finite loss at -eps probe of query {}", i), i);
    }
    perturb_in_place(params, {s, eps});
    result.sketch.queries.push_back(
        {s, (plus - minus) / (2.0 * eps * static_cast<double>(q))});
    probe_sum += plus + minus;
  }
  result.probe_loss = probe_sum / (2.0 * static_cast<double>(q));
  return result;
}

ParamSet materialize(const GradSketch& sketch, const ParamSet& shape) {
  ParamSet out(shape.specs());
  for (std::size_t l = 0; l < out.layer_count(); ++l) layer_estimate(sketch, out, l, out.values(l));
  return out;
}

std::vector<double> apply_sketch(ParamSet& params, const GradSketch& sketch, double step) {
  if (!std::isfinite(step)) throw NumericError("apply_sketch: step is not finite");
  std::vector<double> norms(params.layer_count(), 0.0);
  std::vector<double> buffer(params.max_layer_dim());
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto x = params.values(l);
    auto g = std::span<double>(buffer).first(x.size());
    layer_estimate(sketch, params, l, g);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] *= step;
      sq += g[i] * g[i];
      if (!std::isfinite(x[i] - g[i])) {
        throw NumericError(fmt::format("apply_sketch: non-finite update in layer '{}'",
                                       params.spec(l).name));
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= g[i];
    norms[l] = std::sqrt(sq);
  }
  return norms;
}

std::vector<double> sketch_layer_norms(const GradSketch& sketch, const ParamSet& shape) {
  std::vector<double> norms(shape.layer_count());
  std::vector<double> buffer(shape.max_layer_dim());
  for (std::size_t l = 0; l < shape.layer_count(); ++l) {
    auto g = std::span<double>(buffer).first(shape.spec(l).dim);
    layer_estimate(sketch, shape, l, g);
    norms[l] = l2_norm(g);
  }
  return norms;
}

}  // namespace zotune
