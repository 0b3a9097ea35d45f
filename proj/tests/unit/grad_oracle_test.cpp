#include <gtest/gtest.h>

#include <cmath>

#include "test_oracles.hpp"
#include "zotune/dataset.hpp"
#include "zotune/error.hpp"
#include "zotune/grad_oracle.hpp"
#include "zotune/models.hpp"

namespace zotune {
namespace {

// Mean cross-entropy gradient of logits = W x + b, W row-major classes x features.
std::vector<double> logistic_gradient(const ParamSet& p, const Batch& b, std::size_t features,
                                      std::size_t classes) {
  std::vector<double> g(classes * features + classes, 0.0);
  const auto flat = p.flat();
  for (std::size_t r = 0; r < b.rows; ++r) {
    std::vector<double> z(classes);
    double zmax = -INFINITY;
    for (std::size_t k = 0; k < classes; ++k) {
      z[k] = flat[classes * features + k];
      for (std::size_t f = 0; f < features; ++f) z[k] += flat[k * features + f] * b.inputs[r * features + f];
      zmax = std::max(zmax, z[k]);
    }
    double sum = 0.0;
    for (double& v : z) sum += (v = std::exp(v - zmax));
    for (std::size_t k = 0; k < classes; ++k) {
      const double d = (z[k] / sum - (static_cast<std::size_t>(b.labels[r]) == k ? 1.0 : 0.0)) /
                       static_cast<double>(b.rows);
      for (std::size_t f = 0; f < features; ++f) g[k * features + f] += d * b.inputs[r * features + f];
      g[classes * features + k] += d;
    }
  }
  return g;
}

TEST(FdGradient, QuadraticIsExact) {
  const QuadraticTask task({{"layer0", Role::Dense, 1.0, {0.5, 0.5}}});
  ParamSet p = task.param_template();
  p.flat()[0] = 1.5;
  p.flat()[1] = -1.5;
  const auto before = p;
  const auto g = fd_gradient(task, p, testing::empty_batch());
  EXPECT_NEAR(g.flat()[0], 1.0, 1e-8);
  EXPECT_NEAR(g.flat()[1], -2.0, 1e-8);
  EXPECT_EQ(p, before);
}

TEST(FdGradient, LogisticMatchesClosedForm) {
  const SoftmaxRegression model(2, 3, 4);
  const auto data = make_dataset(DatasetKind::GaussianBlobs, 1, 7);
  ParamSet p = model.param_template();
  testing::fill_normal(p, 8);
  const auto g = fd_gradient(model, p, data[0]);
  const auto expected = logistic_gradient(p, data[0], 2, 3);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_LT(testing::rel_err(g.flat()[i], expected[i]), 1e-6) << i;
  }
}

TEST(FdGradient, ConstantLossGivesZero) {
  auto p = testing::make_params({5, 3});
  testing::fill_normal(p, 1);
  const testing::ConstantOracle oracle(p, 2.5);
  const auto g = fd_gradient(oracle, p, testing::empty_batch());
  for (double x : g.flat()) EXPECT_EQ(x, 0.0);
}

TEST(FdGradient, BudgetGuard) {
  const auto p = testing::make_params({5001});
  const testing::ConstantOracle oracle(p, 1.0);
  auto q = p;
  EXPECT_THROW(fd_gradient(oracle, q, testing::empty_batch()), ConfigError);
  FDSpec spec;
  spec.base = 0.0;
  auto small = testing::make_params({3});
  const testing::ConstantOracle tiny(small, 1.0);
  EXPECT_THROW(fd_gradient(tiny, small, testing::empty_batch(), spec), ConfigError);
}

TEST(FdGradient, AgreesWithAnalyticModels) {
  const auto data = make_dataset(DatasetKind::GaussianBlobs, 1, 3);
  const Mlp mlp(2, 6, 3, 2);
  ParamSet p = mlp.param_template();
  const auto fd = fd_gradient(mlp, p, data[0]);
  const auto exact = mlp.analytic_gradient(p, data[0]);
  for (std::size_t i = 0; i < p.total_dim(); ++i) {
    EXPECT_NEAR(fd.flat()[i], exact.flat()[i], 1e-6 * (1 + std::fabs(exact.flat()[i])));
  }
}

TEST(Directional, QuadraticMatchesGradientDot) {
  const auto task = QuadraticTask::heterogeneous({}, 6);
  ParamSet p = task.param_template();
  testing::fill_normal(p, 1);
  auto u = p;
  testing::fill_normal(u, 2);
  const auto grad = task.analytic_gradient(p, testing::empty_batch());
  double dot = 0.0;
  for (std::size_t i = 0; i < p.total_dim(); ++i) dot += grad.flat()[i] * u.flat()[i];
  for (double h : {1e-4, 1e-2, 1.0, 10.0}) {
    EXPECT_LT(testing::rel_err(directional_derivative(task, p, testing::empty_batch(), u, h), dot),
              1e-9)
        << h;
  }
}

TEST(Directional, MatchesFdOnMlp) {
  const auto data = make_dataset(DatasetKind::GaussianBlobs, 1, 5);
  const Mlp mlp(2, 8, 3, 9);
  ParamSet p = mlp.param_template();
  auto u = p;
  testing::fill_normal(u, 4);
  const auto before = p;
  const auto fd = fd_gradient(mlp, p, data[0]);
  double dot = 0.0;
  for (std::size_t i = 0; i < p.total_dim(); ++i) dot += fd.flat()[i] * u.flat()[i];
  EXPECT_NEAR(directional_derivative(mlp, p, data[0], u, 1e-5), dot, 1e-6);
  EXPECT_EQ(p, before);
}

TEST(Directional, ZeroDirection) {
  const Mlp mlp(2, 8, 3, 9);
  const auto data = make_dataset(DatasetKind::GaussianBlobs, 1, 5);
  ParamSet p = mlp.param_template();
  ParamSet zero = p;
  for (double& x : zero.flat()) x = 0.0;
  EXPECT_EQ(directional_derivative(mlp, p, data[0], zero, 1e-3), 0.0);
}

TEST(ReferenceGradient, PrefersAnalytic) {
  const auto task = QuadraticTask::heterogeneous({}, 6);
  ParamSet p = task.param_template();
  EXPECT_EQ(reference_gradient(task, p, testing::empty_batch()),
            task.analytic_gradient(p, testing::empty_batch()));
  const auto model = make_attention_model(4, 2, 1);
  EXPECT_THROW(model.analytic_gradient(model.param_template(), testing::empty_batch()),
               ConfigError);
}

}  // namespace
}  // namespace zotune
