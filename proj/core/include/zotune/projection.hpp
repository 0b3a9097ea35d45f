#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "zotune/anchor.hpp"
#include "zotune/batch.hpp"
#include "zotune/model.hpp"
#include "zotune/param_set.hpp"

namespace zotune {

struct ProjectionConfig {
  // Clip width: magnitudes gamma / gap stay inside [1 - tau, 1 + tau].
  double tau = 0.2;
  // Projection cycle: learn and apply every kappa iterations.
  std::size_t kappa = 100;
  // Smoothing scalar of the gamma-space two-point estimate.
  double eps_proj = 0.1;
  std::size_t inner_iters = 10;
  double inner_lr = 1e-2;
  // Layers whose gap is at or below this are left alone.
  double gap_floor = 1e-12;

  // Throws ConfigError.
  void validate() const;
};

// Per-layer target distances gamma^(l) from the anchor, aligned with the
// anchor's layer order.
struct ProjectionState {
  ProjectionConfig config;
  std::vector<std::string> layers;
  std::vector<double> gamma;

  static ProjectionState for_anchor(const AnchorStore& anchor, const ProjectionConfig& config);

  std::map<std::string, double> gamma_by_layer() const;
};

// gamma <- gaps, so every magnitude is exactly 1.
void reinit_gamma(ProjectionState& state, std::span<const double> gaps);

// gamma <- clamp(gamma, (1 - tau) gap, (1 + tau) gap). The result is nudged
// by at most one ulp so that gamma / gap, as computed in floating point, is
// inside [1 - tau, 1 + tau].
void clip_gamma(ProjectionState& state, std::span<const double> gaps);

// For each anchored layer with gap > gap_floor:
//   theta <- anchor + (gamma / gap) * (theta - anchor).
// Other layers are untouched. Returns the magnitude applied per anchored
// layer (1 for skipped layers). Throws NumericError on a non-finite gamma
// before modifying anything.
std::vector<double> apply_projection(ParamSet& params, const AnchorStore& anchor,
                                     const ProjectionState& state);

struct ProjectionRound {
  std::vector<double> gamma_before;
  std::vector<double> direction;
  double loss_plus = 0.0;
  double loss_minus = 0.0;
};

struct ProjectionOutcome {
  std::size_t rounds = 0;
  bool aborted = false;
  std::vector<ProjectionRound> trace;
};

// Zeroth-order search for gamma with the weights frozen. Re-initializes gamma
// to the current gaps once, then for each of inner_iters rounds draws
// w ~ N(0, I) over the anchored layers, evaluates the loss with gamma +/-
// eps_proj * w projected in (restoring the cached weights after each probe),
// steps gamma -= inner_lr * (L+ - L-) / (2 eps_proj) * w and clips. A
// non-finite probe ends the search with gamma as it was before that round.
// params are bitwise unchanged on return.
ProjectionOutcome learn_projection(const LossOracle& oracle, ParamSet& params,
                                   const AnchorStore& anchor, ProjectionState& state,
                                   const Batch& batch, std::uint64_t seed,
                                   bool keep_trace = false);

}  // namespace zotune
