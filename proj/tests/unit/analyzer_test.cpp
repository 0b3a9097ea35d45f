#include <gtest/gtest.h>

#include <cmath>

#include "test_oracles.hpp"
#include "zotune/analyzer.hpp"
#include "zotune/dizo.hpp"
#include "zotune/error.hpp"
#include "zotune/models.hpp"

namespace zotune {
namespace {

std::vector<Batch> one_batch() { return {testing::empty_batch()}; }

RunLog synthetic_log(const std::vector<std::vector<double>>& update_rows,
                     const std::vector<std::vector<double>>& gap_rows) {
  RunLog log;
  for (std::size_t l = 0; l < update_rows.front().size(); ++l) {
    log.layers.push_back("layer" + std::to_string(l));
  }
  for (std::size_t k = 0; k < update_rows.size(); ++k) {
    RunRecord r;
    r.iteration = k;
    r.update_norm = update_rows[k];
    r.gap = gap_rows[k];
    log.records.push_back(r);
  }
  return log;
}

TEST(Cv, HandValues) {
  EXPECT_EQ(coefficient_of_variation(std::vector<double>{}), 0.0);
  EXPECT_EQ(coefficient_of_variation(std::vector<double>{3.0}), 0.0);
  EXPECT_EQ(coefficient_of_variation(std::vector<double>{2.0, 2.0, 2.0}), 0.0);
  EXPECT_DOUBLE_EQ(coefficient_of_variation(std::vector<double>{1.0, 3.0}), 0.5);
  EXPECT_EQ(coefficient_of_variation(std::vector<double>{0.0, 0.0}), 0.0);
}

TEST(Trace, SingleLayerAndEqualNormsGiveZeroCv) {
  const auto single = divergence_trace(synthetic_log({{0.0}, {0.4}, {0.9}}, {{0.0}, {1.0}, {2.0}}));
  for (double cv : single.update_cv) EXPECT_EQ(cv, 0.0);
  const auto equal = divergence_trace(
      synthetic_log({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}}, {{0, 0, 0}, {1, 2, 3}, {2, 3, 4}}));
  EXPECT_EQ(equal.mean_update_cv(), 0.0);
  EXPECT_EQ(equal.gaps.size(), 3u);
  EXPECT_EQ(equal.gaps[2], (std::vector<double>{0, 3, 4}));
}

TEST(Trace, RejectsMalformedRecords) {
  auto log = synthetic_log({{0, 0}, {1, 1}}, {{0, 0}, {1, 1}});
  log.records[1].gap.clear();
  EXPECT_THROW(divergence_trace(log), StructuralError);
  log = synthetic_log({{0, 0}, {1, 1}}, {{0, 0}, {1, 1}});
  log.records[1].iteration = 0;
  EXPECT_THROW(divergence_trace(log), StructuralError);
}

TEST(Trace, SpreadEstablishFraction) {
  // Gaps (1, 1 + s_k): spread grows linearly, reaching 80% at iteration 8 of 10.
  std::vector<std::vector<double>> updates, gaps;
  for (int k = 0; k <= 10; ++k) {
    updates.push_back({1.0, 1.0});
    gaps.push_back({1.0, 1.0 + 0.1 * k});
  }
  const auto trace = divergence_trace(synthetic_log(updates, gaps));
  const auto spread = gap_spread_series(trace);
  ASSERT_EQ(spread.size(), 11u);
  EXPECT_EQ(spread[0], 0.0);
  EXPECT_NEAR(spread[10], 0.5 / 1.5, 1e-15);
  EXPECT_NEAR(spread_establish_fraction(trace, 0.8), 0.8, 1e-12);
}

TEST(Trace, ZoIsSymmetricOnEqualDimQuadratic) {
  const auto task = QuadraticTask::heterogeneous({}, 1);
  TrainConfig c;
  c.steps = 1000;
  const auto result = zo_sgd_run(task, task.param_template(), one_batch(), c);
  EXPECT_LT(divergence_trace(result.log).mean_update_cv(), 0.15);
}

TEST(Trace, FoIsAsymmetricUnderHeterogeneousCurvature) {
  QuadraticTask::HeteroOptions o;
  o.curvature_span = 100.0;
  o.curvature = 0.01;
  const auto task = QuadraticTask::heterogeneous(o, 1);
  const std::vector<Batch> data{testing::empty_batch()};
  const auto result = fo_reference_run(task, task.param_template(), data, 0.5, 200);
  EXPECT_GT(divergence_trace(result.log).mean_update_cv(), 0.5);
}

TEST(FoReference, MonotoneOnQuadratic) {
  const auto task = QuadraticTask::heterogeneous({}, 2);
  const std::vector<Batch> data{testing::empty_batch()};
  const auto result = fo_reference_run(task, task.param_template(), data, 1.5, 100);
  for (std::size_t k = 1; k < result.log.records.size(); ++k) {
    EXPECT_LE(result.log.records[k].loss_clean, result.log.records[k - 1].loss_clean);
  }
  EXPECT_LT(result.log.records[10].loss_clean, 1e-6 * result.log.records[0].loss_clean);
  EXPECT_EQ(result.log.method, Method::FoReference);
  EXPECT_EQ(result.log.stats.forward_passes, 100u);
}

TEST(FoReference, ZeroLrIsFlat) {
  const auto task = QuadraticTask::heterogeneous({}, 2);
  const std::vector<Batch> data{testing::empty_batch()};
  const auto result = fo_reference_run(task, task.param_template(), data, 0.0, 20);
  for (const auto& r : result.log.records) {
    EXPECT_EQ(r.loss_clean, result.log.records.front().loss_clean);
    EXPECT_EQ(r.step_movement, 0.0);
  }
  EXPECT_EQ(result.params, task.param_template());
}

TEST(FoReference, EstablishesSpreadEarly) {
  const auto task = QuadraticTask::heterogeneous({}, 3);
  const std::vector<Batch> data{testing::empty_batch()};
  const auto result = fo_reference_run(task, task.param_template(), data, 0.1, 1000);
  EXPECT_LE(spread_establish_fraction(divergence_trace(result.log), 0.8), 0.1);
}

TEST(FoReference, BudgetGuard) {
  const auto p = testing::make_params({5001});
  const testing::ConstantOracle oracle(p, 1.0);
  const std::vector<Batch> data{testing::empty_batch()};
  EXPECT_THROW(fo_reference_run(oracle, p, data, 0.1, 1), ConfigError);
  EXPECT_THROW(fo_reference_run(oracle, p, data, 0.1, 0), ConfigError);
}

TEST(FoReference, FiniteDifferenceFallback) {
  const auto model = make_attention_model(4, 2, 1);
  Batch b;
  b.rows = 2;
  b.cols = 9;
  b.inputs.assign(18, 3.0);
  for (std::size_t i = 9; i < 18; ++i) b.inputs[i] = 12.0;
  b.labels = {1, 0};
  const std::vector<Batch> data{b};
  const auto result = fo_reference_run(model, model.param_template(), data, 0.5, 5);
  EXPECT_LT(result.log.records.back().loss_clean, result.log.records.front().loss_clean);
  EXPECT_EQ(result.log.stats.forward_passes, 5 * 2 * model.param_template().total_dim());
}

// Two-layer quadratic with prescribed dims and a fixed gradient.
QuadraticTask two_layer(std::size_t d0, std::size_t d1, double offset) {
  return QuadraticTask({{"a", Role::Dense, 1.0, std::vector<double>(d0, offset)},
                        {"b", Role::Dense, 1.0, std::vector<double>(d1, offset)}});
}

TEST(VarSym, EqualDimsAreSymmetric) {
  const auto task = two_layer(64, 64, 0.5);
  ParamSet p = task.param_template();
  const auto before = p;
  const auto m = variance_symmetry_test(task, p, testing::empty_batch(), 1e-3, 10000, 1);
  ASSERT_EQ(m.size(), 2u);
  for (const auto& layer : m) {
    EXPECT_GE(layer.normalized_ratio, 0.9);
    EXPECT_LE(layer.normalized_ratio, 1.1);
  }
  EXPECT_EQ(p, before);
}

TEST(VarSym, RawMomentScalesWithDim) {
  const auto task = two_layer(64, 256, 0.5);
  ParamSet p = task.param_template();
  const auto m = variance_symmetry_test(task, p, testing::empty_batch(), 1e-3, 10000, 2);
  EXPECT_EQ(m[1].dim, 256u);
  EXPECT_NEAR(m[1].mean_sq_norm / m[0].mean_sq_norm, 4.0, 0.4);
  EXPECT_NEAR(m[0].normalized_ratio, 1.0, 0.1);
  EXPECT_NEAR(m[1].normalized_ratio, 1.0, 0.1);
}

TEST(VarSym, ZeroGradientPoint) {
  const auto task = two_layer(64, 64, 0.5);
  ParamSet p = task.optimum();
  const double eps = 1e-3;
  const auto m = variance_symmetry_test(task, p, testing::empty_batch(), eps, 10000, 3);
  for (const auto& layer : m) {
    EXPECT_LT(layer.mean_sq_norm, 1e3 * eps * eps);
    EXPECT_GE(layer.normalized_ratio, 0.9);
    EXPECT_LE(layer.normalized_ratio, 1.1);
  }
}

TEST(VarSym, NeedsEnoughSamples) {
  const auto task = two_layer(4, 4, 0.5);
  ParamSet p = task.param_template();
  EXPECT_THROW(variance_symmetry_test(task, p, testing::empty_batch(), 1e-3, 999, 1), ConfigError);
}

TEST(VarSym, InvariantToLossScaling) {
  const auto task = two_layer(16, 48, 0.5);
  const testing::ScaledOracle scaled(task, 8.0);
  ParamSet p = task.param_template();
  const auto a = variance_symmetry_test(task, p, testing::empty_batch(), 1e-3, 2000, 5);
  const auto b = variance_symmetry_test(scaled, p, testing::empty_batch(), 1e-3, 2000, 5);
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_DOUBLE_EQ(a[l].normalized_ratio, b[l].normalized_ratio);
    EXPECT_DOUBLE_EQ(b[l].mean_sq_norm, 64.0 * a[l].mean_sq_norm);
  }
}

TEST(Audit, ZoSlackIsTauTimesRmax) {
  const auto task = QuadraticTask::heterogeneous({}, 1);
  TrainConfig c;
  c.steps = 300;
  const auto result = zo_sgd_run(task, task.param_template(), one_batch(), c);
  const double tau = 0.2;
  const auto report = stability_audit(result.log, tau);
  EXPECT_EQ(report.violations, 0u);
  EXPECT_EQ(report.rows_checked, 300u);
  double r_max = 0.0;
  for (std::size_t k = 1; k < result.log.records.size(); ++k) {
    const auto& r = result.log.records[k];
    r_max = std::max(r_max, l2_norm(r.gap));
    EXPECT_NEAR(r.step_movement, l2_norm(r.update_norm), 1e-12);
    EXPECT_NEAR(report.slack[k - 1], tau * r_max, 1e-9);
    EXPECT_GE(report.slack[k - 1], 0.0);
  }
  EXPECT_DOUBLE_EQ(report.r_max, r_max);
}

TEST(Audit, TauZeroWithoutProjectionHasZeroSlack) {
  const auto task = QuadraticTask::heterogeneous({}, 2);
  const auto anchor = build_anchor(task.param_template(), {Role::Dense}, AnchorPrecision::F64);
  ProjectionConfig p;
  p.kappa = 1000000;
  TrainConfig c;
  c.steps = 300;
  const auto result =
      dizo_run(task, task.param_template(), one_batch(), c, p, anchor);
  const auto report = stability_audit(result.log, 0.0);
  for (double s : report.slack) EXPECT_NEAR(s, 0.0, 1e-9);
  EXPECT_EQ(report.violations, 0u);
}

TEST(Audit, DetectsInjectedViolation) {
  const auto task = QuadraticTask::heterogeneous({}, 1);
  TrainConfig c;
  c.steps = 50;
  auto log = zo_sgd_run(task, task.param_template(), one_batch(), c).log;
  log.records[20].step_movement += 10.0;
  const auto report = stability_audit(log, 0.2);
  EXPECT_EQ(report.violations, 1u);
  EXPECT_LT(report.min_slack, -1.0);
}

TEST(Rate, PowerLawFitIsExactOnPowerLaw) {
  const std::vector<std::size_t> budgets{100, 200, 400, 800, 1600};
  std::vector<double> values;
  for (auto b : budgets) values.push_back(3.0 * std::pow(static_cast<double>(b), -0.5));
  const auto fit = fit_power_law(budgets, values);
  EXPECT_NEAR(fit.alpha, 0.5, 1e-12);
  EXPECT_NEAR(fit.log_intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(fit.residual, 0.0, 1e-12);
}

TEST(Rate, RecoversSyntheticDecay) {
  // theta_t = theta* (1 - 1/sqrt(t)) on L = 0.5 ||theta - theta*||^2 gives
  // ||grad||^2 = ||theta*||^2 / t.
  const double norm_sq = 7.0;
  const BudgetRun run = [&](std::size_t budget, std::uint64_t) {
    std::vector<double> out;
    for (std::size_t k = 1; k <= 20; ++k) {
      const double t = static_cast<double>(budget * k / 20);
      out.push_back(norm_sq / t);
    }
    return out;
  };
  const std::vector<std::size_t> budgets{500, 1000, 2000, 4000, 8000};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto fit = rate_fit(run, budgets, seeds);
  EXPECT_NEAR(fit.alpha, 1.0, 0.1);
}

TEST(Rate, ConstantIteratesGiveZero) {
  const BudgetRun run = [](std::size_t, std::uint64_t) { return std::vector<double>(20, 2.0); };
  const std::vector<std::size_t> budgets{500, 1000, 2000, 4000, 8000};
  const std::vector<std::uint64_t> seeds{1};
  EXPECT_NEAR(rate_fit(run, budgets, seeds).alpha, 0.0, 1e-12);
}

TEST(Rate, RejectsNarrowBudgets) {
  const BudgetRun run = [](std::size_t, std::uint64_t) { return std::vector<double>(2, 1.0); };
  const std::vector<std::uint64_t> seeds{1};
  const std::vector<std::size_t> three{100, 1000, 10000};
  EXPECT_THROW(rate_fit(run, three, seeds), ConfigError);
  const std::vector<std::size_t> narrow{100, 200, 400, 800};
  EXPECT_THROW(rate_fit(run, narrow, seeds), ConfigError);
}

}  // namespace
}  // namespace zotune
