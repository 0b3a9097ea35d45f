#include "zotune/projection.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "zotune/error.hpp"
#include "zotune/rng.hpp"

namespace zotune {

void ProjectionConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("proj.tau must lie in (0, 1)");
  if (kappa < 1) throw ConfigError("proj.kappa must be >= 1");
  if (!(eps_proj > 0.0) || !std::isfinite(eps_proj)) throw ConfigError("proj.eps must be > 0");
  if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) throw ConfigError("proj.inner_lr must be >= 0");
  if (!(gap_floor >= 0.0)) throw ConfigError("gap floor must be >= 0");
}

ProjectionState ProjectionState::for_anchor(const AnchorStore& anchor,
                                            const ProjectionConfig& config) {
  config.validate();
  ProjectionState state;
  state.config = config;
  state.layers = anchor.names();
  state.gamma.assign(state.layers.size(), 0.0);
  return state;
}

std::map<std::string, double> ProjectionState::gamma_by_layer() const {
  std::map<std::string, double> out;
  for (std::size_t k = 0; k < layers.size(); ++k) out[layers[k]] = gamma[k];
  return out;
}

namespace {

void require_aligned(const ProjectionState& state, std::span<const double> gaps) {
  if (gaps.size() != state.gamma.size()) {
    throw StructuralError(fmt::format("projection has {} layers but {} gaps were given",
                                      state.gamma.size(), gaps.size()));
  }
}

// Must match the summation order used for the gaps handed to clip_gamma.
double gap_to_anchor(std::span<const double> theta, const AnchorLayer& layer) {
  double sum = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double diff = theta[i] - layer.at(i);
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

}  // namespace

void reinit_gamma(ProjectionState& state, std::span<const double> gaps) {
  require_aligned(state, gaps);
  std::copy(gaps.begin(), gaps.end(), state.gamma.begin());
}

void clip_gamma(ProjectionState& state, std::span<const double> gaps) {
  require_aligned(state, gaps);
  const double lo_mag = 1.0 - state.config.tau;
  const double hi_mag = 1.0 + state.config.tau;
  for (std::size_t k = 0; k < gaps.size(); ++k) {
    const double gap = gaps[k];
    double& g = state.gamma[k];
    if (std::isnan(g)) continue;
    g = std::min(std::max(g, lo_mag * gap), hi_mag * gap);
    if (gap > 0.0) {
      while (g / gap > hi_mag) g = std::nextafter(g, 0.0);
      while (g / gap < lo_mag) g = std::nextafter(g, hi_mag * gap * 2.0);
    }
  }
}

std::vector<double> apply_projection(ParamSet& params, const AnchorStore& anchor,
                                     const ProjectionState& state) {
  const auto bound = anchor.bind(params);
  if (bound.size() != state.gamma.size()) {
    throw StructuralError("projection state does not match the anchor");
  }
  for (std::size_t k = 0; k < bound.size(); ++k) {
    if (state.layers[k] != anchor.layers()[k].name) {
      throw StructuralError(fmt::format("projection layer '{}' does not match anchor layer '{}'",
                                        state.layers[k], anchor.layers()[k].name));
    }
    if (!std::isfinite(state.gamma[k])) {
      throw NumericError(fmt::format("gamma for layer '{}' is not finite", state.layers[k]));
    }
  }
  std::vector<double> magnitudes(bound.size(), 1.0);
  for (std::size_t k = 0; k < bound.size(); ++k) {
    const auto& layer = anchor.layers()[k];
    auto theta = params.values(bound[k]);
    const double gap = gap_to_anchor(theta, layer);
    if (gap <= state.config.gap_floor) continue;
    const double magnitude = state.gamma[k] / gap;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double base = layer.at(i);
      theta[i] = base + magnitude * (theta[i] - base);
    }
    magnitudes[k] = magnitude;
  }
  return magnitudes;
}

ProjectionOutcome learn_projection(const LossOracle& oracle, ParamSet& params,
                                   const AnchorStore& anchor, ProjectionState& state,
                                   const Batch& batch, std::uint64_t seed, bool keep_trace) {
  const auto bound = anchor.bind(params);
  const auto gaps = anchored_gaps(params, anchor);
  reinit_gamma(state, gaps);

  std::vector<std::vector<double>> cache;
  cache.reserve(bound.size());
  for (std::size_t idx : bound) {
    const auto v = params.values(idx);
    cache.emplace_back(v.begin(), v.end());
  }
  auto restore = [&] {
    for (std::size_t k = 0; k < bound.size(); ++k) {
      std::copy(cache[k].begin(), cache[k].end(), params.values(bound[k]).begin());
    }
  };

  const auto& cfg = state.config;
  const std::size_t n = state.gamma.size();
  ProjectionOutcome outcome;
  std::vector<double> w(n);
  for (std::size_t round = 0; round < cfg.inner_iters; ++round) {
    Xoshiro256 rng(derive_seed(seed, round));
    for (double& x : w) x = rng.normal();
    const std::vector<double> before = state.gamma;

    auto probe = [&](double sign) {
      for (std::size_t k = 0; k < n; ++k) state.gamma[k] = before[k] + sign * cfg.eps_proj * w[k];
      apply_projection(params, anchor, state);
      const double value = oracle.evaluate(params, batch);
      restore();
      return value;
    };

    double plus = 0.0;
    double minus = 0.0;
    try {
      plus = probe(+1.0);
      minus = probe(-1.0);
    } catch (const NumericError&) {
      restore();
      state.gamma = before;
      outcome.aborted = true;
      break;
    }
    const double slope = (plus - minus) / (2.0 * cfg.eps_proj);
    for (std::size_t k = 0; k < n; ++k) state.gamma[k] = before[k] - cfg.inner_lr * slope * w[k];
    clip_gamma(state, gaps);
    if (!all_finite(state.gamma)) {
      state.gamma = before;
      outcome.aborted = true;
      break;
    }
    ++outcome.rounds;
    if (keep_trace) outcome.trace.push_back({before, w, plus, minus});
  }
  return outcome;
}

}  // namespace zotune
