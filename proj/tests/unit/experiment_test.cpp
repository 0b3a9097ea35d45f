#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "zotune/error.hpp"
#include "zotune/harness/experiment.hpp"
#include "zotune/harness/records_csv.hpp"

namespace zotune::harness {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("zotune_exp_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config(const fs::path& out, std::size_t kappa = 20) {
  auto c = parse_config(
      "task = quadratic_hetero\nmethods = zo_sgd, dizo\nseeds = 1, 2, 3\n"
      "train.steps = 200\ntrain.lr = 0.002\nproj.tau = 0.2\nproj.kappa = " +
      std::to_string(kappa) + "\ntask.noise = 0.1\nthreshold = 0.9\n");
  c.output_dir = out;
  return c;
}

TEST(Arms, ExpandAndName) {
  const auto arms = expand_arms(small_config("x"));
  ASSERT_EQ(arms.size(), 6u);
  EXPECT_EQ(arms[0].name(), "zo_sgd_seed1");
  EXPECT_EQ(arms[3].name(), "dizo_seed1");
  EXPECT_EQ(arms[5].name(), "dizo_seed3");
}

TEST(Experiment, WritesOneCsvPerArm) {
  const auto dir = scratch("count");
  const auto summary = run_experiment(small_config(dir), 3);
  std::size_t csv = 0, ckpt = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") ++csv;
    if (e.path().extension() == ".ckpt") ++ckpt;
  }
  EXPECT_EQ(csv, 6u);
  EXPECT_EQ(ckpt, 6u);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_EQ(summary.arms.size(), 6u);
  EXPECT_TRUE(summary.failed().empty());
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_TRUE(manifest.contains("config"));
  EXPECT_FALSE(manifest.contains("timestamp"));
  const auto log = read_records_csv(dir / "dizo_seed2.csv");
  EXPECT_EQ(log.records.back().iteration, 200u);
  fs::remove_all(dir);
}

TEST(Experiment, RerunIsBitwiseIdentical) {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  run_experiment(small_config(a), 1);
  run_experiment(small_config(b), 4);
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().filename() == "manifest.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, SummaryJsonRoundTrip) {
  const auto dir = scratch("json");
  const auto summary = run_experiment(small_config(dir), 2);
  const auto loaded = load_summary(dir / "summary.json");
  ASSERT_EQ(loaded.arms.size(), summary.arms.size());
  for (std::size_t i = 0; i < loaded.arms.size(); ++i) {
    EXPECT_EQ(to_json(loaded.arms[i]), to_json(summary.arms[i]));
  }
  EXPECT_THROW(summary_from_json(nlohmann::json::object()), ConfigError);
  fs::remove_all(dir);
}

TEST(Compare, IdenticalArmsGiveRatioOne) {
  const auto dir = scratch("identical");
  const auto summary = run_experiment(small_config(dir, 1000), 2);
  const auto report = compare_arms({summary});
  ASSERT_TRUE(report.dizo_over_zo.has_value());
  EXPECT_EQ(*report.dizo_over_zo, 1.0);
  EXPECT_FALSE(format_report(report).empty());
  fs::remove_all(dir);
}

TEST(Compare, ForwardPassFormula) {
  EXPECT_EQ(expected_forward_passes(Method::Dizo, 1000, 1, 100, 10), 2 * 1000u + 20 * 10u);
  EXPECT_EQ(expected_forward_passes(Method::Dizo, 1050, 1, 100, 10), 2 * 1050u + 20 * 10u);
  EXPECT_EQ(expected_forward_passes(Method::ZoSgd, 1000, 3, 100, 10), 6000u);
  const auto dir = scratch("passes");
  auto config = small_config(dir);
  config.projection->inner_iters = 10;
  const auto summary = run_experiment(config, 2);
  for (const auto& arm : summary.arms) {
    EXPECT_EQ(arm.forward_passes,
              expected_forward_passes(arm.method, arm.steps, arm.q, arm.kappa, arm.inner_iters));
  }
  const auto report = compare_arms({summary});
  for (const auto& w : report.warnings) EXPECT_EQ(w.find("forward-pass"), std::string::npos) << w;
  fs::remove_all(dir);
}

TEST(Compare, DnfArmsAreExcludedWithWarning) {
  ExperimentSummary s;
  auto arm = [](Method m, std::uint64_t seed, std::optional<std::size_t> it) {
    ArmSummary a;
    a.method = m;
    a.seed = seed;
    a.steps = 100;
    a.q = 1;
    a.kappa = m == Method::Dizo ? 10 : 0;
    a.forward_passes = expected_forward_passes(m, 100, 1, 10, 10);
    a.inner_iters = m == Method::Dizo ? 10 : 0;
    a.iterations_to_threshold = it;
    return a;
  };
  s.arms = {arm(Method::ZoSgd, 1, 100), arm(Method::ZoSgd, 2, std::nullopt),
            arm(Method::ZoSgd, 3, 60), arm(Method::Dizo, 1, 40), arm(Method::Dizo, 2, 50),
            arm(Method::Dizo, 3, std::nullopt)};
  const auto report = compare_arms({s});
  ASSERT_TRUE(report.dizo_over_zo.has_value());
  EXPECT_DOUBLE_EQ(*report.dizo_over_zo, 45.0 / 80.0);
  std::size_t dnf_warnings = 0;
  for (const auto& w : report.warnings) dnf_warnings += w.find("DNF") != std::string::npos;
  EXPECT_EQ(dnf_warnings, 2u);

  for (auto& a : s.arms) {
    if (a.method == Method::Dizo) a.iterations_to_threshold.reset();
  }
  const auto none = compare_arms({s});
  EXPECT_FALSE(none.dizo_over_zo.has_value());
}

TEST(Compare, RejectsMismatchedSummaries) {
  ExperimentSummary a;
  a.arms.resize(1);
  EXPECT_THROW(compare_arms({a}), ConfigError);
  ExperimentSummary b = a;
  b.task = TaskKind::BlobsMlp;
  EXPECT_THROW(compare_arms({a, b}), ConfigError);
  EXPECT_THROW(compare_arms({}), ConfigError);
}

TEST(Experiment, NumericFailureIsRecorded) {
  auto c = parse_config("task = quadratic_hetero\nmethods = zo_sgd\nseeds = 1\n"
                        "train.steps = 500\ntrain.lr = 1e200\n");
  const auto result = run_arm(c, {Method::ZoSgd, 1});
  EXPECT_TRUE(result.summary.aborted);
  EXPECT_FALSE(result.summary.error.empty());
  EXPECT_FALSE(result.log.records.empty());
}

TEST(Experiment, FoArmUsesItsOwnLr) {
  auto c = parse_config("task = quadratic_hetero\nmethods = fo_ref\nseeds = 1\n"
                        "train.steps = 50\ntrain.lr = 0\nfo.lr = 0.5\n");
  const auto result = run_arm(c, {Method::FoReference, 1});
  EXPECT_LT(result.summary.final_loss, 0.5 * result.summary.initial_loss);
  EXPECT_EQ(result.summary.forward_passes, 50u);
}

TEST(Workers, FromEnvironment) {
  ::setenv("ZOTUNE_WORKERS", "3", 1);
  EXPECT_EQ(worker_count_from_env(), 3u);
  ::setenv("ZOTUNE_WORKERS", "0", 1);
  EXPECT_THROW(worker_count_from_env(), ConfigError);
  ::setenv("ZOTUNE_WORKERS", "lots", 1);
  EXPECT_THROW(worker_count_from_env(), ConfigError);
  ::unsetenv("ZOTUNE_WORKERS");
  EXPECT_GE(worker_count_from_env(), 1u);
}

TEST(Median, Values) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

}  // namespace
}  // namespace zotune::harness
