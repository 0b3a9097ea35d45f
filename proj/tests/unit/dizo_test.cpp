#include <gtest/gtest.h>

#include <algorithm>

#include "test_oracles.hpp"
#include "zotune/analyzer.hpp"
#include "zotune/dataset.hpp"
#include "zotune/dizo.hpp"
#include "zotune/models.hpp"

namespace zotune {
namespace {

TrainConfig train(std::size_t steps, std::uint64_t seed) {
  TrainConfig c;
  c.steps = steps;
  c.lr = 2e-3;
  c.seed = seed;
  return c;
}

TEST(Dizo, NeverTriggeringMatchesZoSgd) {
  const auto task = QuadraticTask::heterogeneous({}, 2);
  const auto data = task.make_batches(3, 0.3, 5);
  const auto anchor = build_anchor(task.param_template(), {Role::Dense}, AnchorPrecision::F64);
  ProjectionConfig p;
  p.kappa = 401;
  const auto config = train(400, 17);
  const auto zo = zo_sgd_run(task, task.param_template(), data, config);
  const auto di = dizo_run(task, task.param_template(), data, config, p, anchor);
  EXPECT_EQ(di.params, zo.params);
  ASSERT_EQ(di.log.records.size(), zo.log.records.size());
  for (std::size_t k = 0; k < zo.log.records.size(); ++k) {
    EXPECT_EQ(di.log.records[k].loss_clean, zo.log.records[k].loss_clean);
    EXPECT_EQ(di.log.records[k].update_norm, zo.log.records[k].update_norm);
    EXPECT_EQ(di.log.records[k].gap, zo.log.records[k].gap);
  }
  EXPECT_EQ(di.log.stats.projection_cycles, 0u);
}

TEST(Dizo, MagnitudesInsideClipWindow) {
  const auto task = QuadraticTask::heterogeneous({}, 3);
  const std::vector<Batch> data{testing::empty_batch()};
  const auto anchor = build_anchor(task.param_template(), {Role::Dense}, AnchorPrecision::F64);
  ProjectionConfig p;
  p.tau = 0.15;
  p.kappa = 20;
  const auto result = dizo_run(task, task.param_template(), data, train(400, 1), p, anchor);
  EXPECT_EQ(result.log.stats.projection_cycles, 20u);
  std::size_t projected = 0;
  for (const auto& r : result.log.records) {
    ASSERT_EQ(r.projection_mag.size(), 4u);
    for (double m : r.projection_mag) {
      EXPECT_LE(m, 1 + p.tau);
      EXPECT_GE(m, 1 - p.tau);
    }
    if (r.iteration > 0 && r.iteration % p.kappa == 0) ++projected;
  }
  EXPECT_EQ(projected, 20u);
  EXPECT_EQ(result.log.stats.stability_violations, 0u);
}

TEST(Dizo, ForwardPassCount) {
  const auto task = QuadraticTask::heterogeneous({}, 3);
  const std::vector<Batch> data{testing::empty_batch()};
  const auto anchor = build_anchor(task.param_template(), {Role::Dense}, AnchorPrecision::F64);
  ProjectionConfig p;
  p.kappa = 100;
  p.inner_iters = 10;
  auto config = train(950, 1);
  config.q = 2;
  const auto result = dizo_run(task, task.param_template(), data, config, p, anchor);
  EXPECT_EQ(result.log.stats.forward_passes, 2 * 2 * 950u + 2 * 10 * (950u / 100));
}

TEST(Dizo, OnlyAnchoredLayersAreProjected) {
  std::vector<LayerSpec> specs{{"q", Role::AttnQ, 8}, {"v", Role::AttnV, 8}, {"mlp", Role::Dense, 8}};
  ParamSet params(specs);
  testing::fill_normal(params, 1);
  const auto anchor = build_anchor(params, {Role::AttnQ, Role::AttnV}, AnchorPrecision::F64);
  testing::fill_normal(params, 2);
  std::vector<QuadraticLayer> layers;
  for (const auto& s : specs) layers.push_back({s.name, s.role, 1.0, std::vector<double>(8, 0.3)});
  const QuadraticTask task(layers);
  ProjectionConfig p;
  p.kappa = 1;
  p.inner_lr = 0.1;
  ProjectionAdjuster adjuster(task, anchor, p);
  const auto batch = testing::empty_batch();
  const auto mlp = testing::to_vector(params.values(2));
  const auto before = params;
  const auto outcome = adjuster.adjust(params, {1, 7, &batch});
  ASSERT_TRUE(outcome.has_value());
  EXPECT_EQ(outcome->magnitudes.size(), 2u);
  EXPECT_EQ(testing::to_vector(params.values(2)), mlp);
  EXPECT_FALSE(params == before);
  const auto gaps = anchored_gaps(params, anchor);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_LT(testing::rel_err(gaps[k], adjuster.state().gamma[k]), 1e-9);
  }
}

TEST(Dizo, Deterministic) {
  const auto task = QuadraticTask::heterogeneous({}, 4);
  const auto data = task.make_batches(4, 0.2, 1);
  const auto anchor = build_anchor(task.param_template(), {Role::Dense}, AnchorPrecision::Q8);
  ProjectionConfig p;
  p.kappa = 25;
  const auto a = dizo_run(task, task.param_template(), data, train(300, 9), p, anchor);
  const auto b = dizo_run(task, task.param_template(), data, train(300, 9), p, anchor);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.log.records, b.log.records);
}

TEST(Dizo, GapColumnsMeasureAgainstReconstructedAnchor) {
  const SoftmaxRegression model(2, 3, 1);
  ParamSet init = model.param_template();
  testing::fill_normal(init, 5);
  const auto anchor = build_anchor(init, {Role::Dense}, AnchorPrecision::Q8);
  const auto blobs = make_dataset(DatasetKind::GaussianBlobs, 2, 3);
  ProjectionConfig p;
  p.kappa = 10;
  const auto result = dizo_run(model, init, blobs, train(30, 2), p, anchor);
  const auto& log = result.log;
  ASSERT_EQ(log.projected_layers, anchor.names());
  const auto final_gaps = anchored_gaps(result.params, anchor);
  const auto& last = log.records.back();
  for (std::size_t k = 0; k < anchor.layers().size(); ++k) {
    const auto it = std::find(log.layers.begin(), log.layers.end(), anchor.layers()[k].name);
    ASSERT_NE(it, log.layers.end());
    EXPECT_EQ(last.gap[static_cast<std::size_t>(it - log.layers.begin())], final_gaps[k]);
  }
}

TEST(Dizo, AuditFindsNoViolations) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto task = QuadraticTask::heterogeneous({}, seed);
    const std::vector<Batch> data{testing::empty_batch()};
    const auto anchor = build_anchor(task.param_template(), {Role::Dense}, AnchorPrecision::F64);
    ProjectionConfig p;
    p.kappa = 10;
    const auto result = dizo_run(task, task.param_template(), data, train(500, seed), p, anchor);
    const auto report = stability_audit(result.log, p.tau);
    EXPECT_EQ(report.violations, 0u);
    EXPECT_EQ(report.rows_checked, 500u);
  }
}

}  // namespace
}  // namespace zotune
