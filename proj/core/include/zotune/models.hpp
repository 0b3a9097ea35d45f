#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zotune/model.hpp"

namespace zotune {

// Numerically stable log(sum(exp(v))).
double log_sum_exp(std::span<const double> v);
void softmax_in_place(std::span<double> v);
// Mean cross-entropy contribution of one row of logits.
double cross_entropy(std::span<const double> logits, std::int32_t label);

struct QuadraticLayer {
  std::string name;
  Role role = Role::Dense;
  double curvature = 1.0;
  std::vector<double> optimum;
};

// L = sum_l 0.5 * a_l * ||theta_l - c_l - s_l||^2, where s is the batch's
// optional optimum shift (batch.targets, length total_dim).
class QuadraticTask final : public LossOracle {
 public:
  explicit QuadraticTask(std::vector<QuadraticLayer> layers);

  struct HeteroOptions {
    std::size_t layers = 4;
    std::size_t dim = 16;
    double radius_min = 1.0;
    // Ratio between the largest and smallest optimum radius.
    double radius_span = 10.0;
    double curvature = 1.0;
    // Ratio between the largest and smallest curvature.
    double curvature_span = 1.0;
  };
  // Optimum c_l lies at radius radius_min * span^(l/(L-1)) in a random
  // direction; radii and curvatures are geometric across layers. Start = 0.
  static QuadraticTask heterogeneous(const HeteroOptions& options, std::uint64_t seed);

  std::string_view name() const override { return "quadratic"; }
  const ParamSet& param_template() const override { return init_; }
  bool has_analytic_gradient() const override { return true; }

  const std::vector<QuadraticLayer>& layers() const { return layers_; }
  // The parameter set holding every c_l.
  ParamSet optimum() const;

  // Batches carrying N(0, noise^2) optimum shifts; noise = 0 gives empty
  // targets.
  std::vector<Batch> make_batches(std::size_t count, double noise, std::uint64_t seed) const;

 protected:
  double loss(const ParamSet& params, const Batch& batch) const override;
  void gradient(const ParamSet& params, const Batch& batch, ParamSet& out) const override;

 private:
  std::vector<QuadraticLayer> layers_;
  ParamSet init_;
};

// Multinomial logistic regression: logits = W x + b.
class SoftmaxRegression final : public LossOracle {
 public:
  SoftmaxRegression(std::size_t features, std::size_t classes, std::uint64_t seed);

  std::string_view name() const override { return "softmax_regression"; }
  const ParamSet& param_template() const override { return init_; }
  bool has_analytic_gradient() const override { return true; }
  std::optional<double> accuracy(const ParamSet& params, const Batch& batch) const override;

 protected:
  double loss(const ParamSet& params, const Batch& batch) const override;
  void gradient(const ParamSet& params, const Batch& batch, ParamSet& out) const override;

 private:
  void logits(const ParamSet& params, std::span<const double> x, std::span<double> out) const;

  std::size_t features_;
  std::size_t classes_;
  ParamSet init_;
};

// One tanh hidden layer followed by a linear classifier.
class Mlp final : public LossOracle {
 public:
  Mlp(std::size_t features, std::size_t hidden, std::size_t classes, std::uint64_t seed);

  std::string_view name() const override { return "mlp"; }
  const ParamSet& param_template() const override { return init_; }
  bool has_analytic_gradient() const override { return true; }
  std::optional<double> accuracy(const ParamSet& params, const Batch& batch) const override;

 protected:
  double loss(const ParamSet& params, const Batch& batch) const override;
  void gradient(const ParamSet& params, const Batch& batch, ParamSet& out) const override;

 private:
  void forward(const ParamSet& params, std::span<const double> x, std::span<double> hidden,
               std::span<double> logits) const;

  std::size_t features_;
  std::size_t hidden_;
  std::size_t classes_;
  ParamSet init_;
};

struct AttentionOptions {
  std::size_t vocab = 16;
  std::size_t seq_len = 9;
  std::size_t d_model = 32;
  std::size_t classes = 2;
};

// Token embedding -> single-head softmax self-attention with residual ->
// mean pooling -> linear head. Layers: embed (Other), attn.q (AttnQ),
// attn.k (AttnK), attn.v (AttnV), attn.o (AttnO), head.weight (Dense),
// head.bias (Bias). Projections are d_model x d_model, applied as W x.
class AttentionModel final : public LossOracle {
 public:
  AttentionModel(const AttentionOptions& options, std::uint64_t seed);

  std::string_view name() const override { return "attention"; }
  const ParamSet& param_template() const override { return init_; }
  std::optional<double> accuracy(const ParamSet& params, const Batch& batch) const override;

  const AttentionOptions& options() const { return options_; }

  // seq_len x seq_len row-stochastic attention matrix for one token row.
  std::vector<double> attention_weights(const ParamSet& params,
                                        std::span<const double> tokens) const;

 protected:
  double loss(const ParamSet& params, const Batch& batch) const override;

 private:
  struct Workspace;
  void forward(const ParamSet& params, std::span<const double> tokens, Workspace& ws) const;

  AttentionOptions options_;
  ParamSet init_;
};

AttentionModel make_attention_model(std::size_t d_model, std::size_t num_classes,
                                    std::uint64_t seed);

}  // namespace zotune
