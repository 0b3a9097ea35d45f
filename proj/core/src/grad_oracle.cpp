#include "zotune/grad_oracle.hpp"

#include <cmath>

#include <fmt/format.h>

#include "zotune/error.hpp"

namespace zotune {

ParamSet fd_gradient(const LossOracle& oracle, ParamSet& params, const Batch& batch,
                     const FDSpec& spec) {
  if (!(spec.base > 0.0)) throw ConfigError("fd base step must be > 0");
  if (params.total_dim() > spec.max_dim) {
    throw ConfigError(fmt::format("fd_gradient: total_dim {} exceeds the budget of {}",
                                  params.total_dim(), spec.max_dim));
  }
  ParamSet grad(params.specs());
  auto x = params.flat();
  auto g = grad.flat();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    const double h = spec.base * (1.0 + std::fabs(saved));
    double up = 0.0;
    double down = 0.0;
    try {
      x[i] = saved + h;
      up = oracle.evaluate(params, batch);
      x[i] = saved - h;
      down = oracle.evaluate(params, batch);
    } catch (...) {
      x[i] = saved;
      throw;
    }
    x[i] = saved;
    // Divide by the realized spacing rather than 2h.
    g[i] = (up - down) / ((saved + h) - (saved - h));
  }
  return grad;
}

double directional_derivative(const LossOracle& oracle, ParamSet& params, const Batch& batch,
                              const ParamSet& direction, double h) {
  if (!(h > 0.0)) throw ConfigError("directional_derivative: h must be > 0");
  require_same_shape(params, direction, "directional_derivative");
  const ParamSet saved = params;
  auto x = params.flat();
  const auto base = saved.flat();
  const auto u = direction.flat();
  double up = 0.0;
  double down = 0.0;
  try {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = base[i] + h * u[i];
    up = oracle.evaluate(params, batch);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = base[i] - h * u[i];
    down = oracle.evaluate(params, batch);
  } catch (...) {
    std::copy(base.begin(), base.end(), x.begin());
    throw;
  }
  std::copy(base.begin(), base.end(), x.begin());
  return (up - down) / (2.0 * h);
}

ParamSet reference_gradient(const LossOracle& oracle, ParamSet& params, const Batch& batch,
                            const FDSpec& spec) {
  if (oracle.has_analytic_gradient()) return oracle.analytic_gradient(params, batch);
  return fd_gradient(oracle, params, batch, spec);
}

}  // namespace zotune
