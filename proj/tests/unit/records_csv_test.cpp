#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_oracles.hpp"
#include "zotune/analyzer.hpp"
#include "zotune/dizo.hpp"
#include "zotune/error.hpp"
#include "zotune/harness/records_csv.hpp"
#include "zotune/models.hpp"

namespace zotune::harness {
namespace {

RunLog dizo_log() {
  const auto task = QuadraticTask::heterogeneous({}, 4);
  const auto anchor = build_anchor(task.param_template(), {Role::Dense}, AnchorPrecision::F64);
  ProjectionConfig p;
  p.kappa = 7;
  TrainConfig c;
  c.steps = 60;
  c.lr = 3e-3;
  const std::vector<Batch> data{zotune::testing::empty_batch()};
  return dizo_run(task, task.param_template(), data, c, p, anchor).log;
}

TEST(RecordsCsv, HeaderLayout) {
  const auto log = dizo_log();
  const auto header = csv_header(log);
  ASSERT_EQ(header.size(), 6u + 4 + 4 + 4);
  EXPECT_EQ(header[0], "iter");
  EXPECT_EQ(header[6], "gap." + log.layers[0]);
  EXPECT_EQ(header[10], "upd." + log.layers[0]);
  EXPECT_EQ(header[14], "projmag." + log.projected_layers[0]);
}

TEST(RecordsCsv, RoundTripIsBitwise) {
  const auto log = dizo_log();
  const auto back = parse_records_csv(format_records_csv(log));
  EXPECT_EQ(back.method, Method::Dizo);
  EXPECT_EQ(back.layers, log.layers);
  EXPECT_EQ(back.projected_layers, log.projected_layers);
  EXPECT_EQ(back.records, log.records);
  const auto a = stability_audit(log, 0.2);
  const auto b = stability_audit(back, 0.2);
  EXPECT_EQ(a.slack, b.slack);
}

TEST(RecordsCsv, ZoLogHasNoProjectionColumns) {
  const auto task = QuadraticTask::heterogeneous({}, 4);
  TrainConfig c;
  c.steps = 10;
  const std::vector<Batch> data{zotune::testing::empty_batch()};
  const auto log = zo_sgd_run(task, task.param_template(), data, c).log;
  const auto back = parse_records_csv(format_records_csv(log));
  EXPECT_EQ(back.method, Method::ZoSgd);
  EXPECT_TRUE(back.projected_layers.empty());
  EXPECT_EQ(back.records, log.records);
}

TEST(RecordsCsv, MalformedInput) {
  EXPECT_THROW(parse_records_csv(""), StructuralError);
  EXPECT_THROW(parse_records_csv("iter,loss\n"), StructuralError);
  const std::string header = "iter,loss_clean,loss_probe,lr,step_movement,stability_slack,gap.a,upd.a\n";
  EXPECT_NO_THROW(parse_records_csv(header + "0,1,1,0.1,0,0,0,0\n"));
  EXPECT_THROW(parse_records_csv(header + "0,1,1,0.1,0,0,0\n"), StructuralError);
  EXPECT_THROW(parse_records_csv(header + "0,1,x,0.1,0,0,0,0\n"), StructuralError);
  EXPECT_THROW(parse_records_csv("iter,loss_clean,loss_probe,lr,step_movement,stability_slack,gap.a\n"),
               StructuralError);
}

TEST(RecordsCsv, AtomicWriteReplacesFile) {
  const auto dir = std::filesystem::temp_directory_path() / "zotune_csv_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto path = dir / "arm.csv";
  write_file_atomic(path, "first\n");
  write_file_atomic(path, "second\n");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "second");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& entry : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
  std::filesystem::remove_all(dir);
}

TEST(RecordsCsv, ReadFromDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "zotune_csv_read";
  std::filesystem::create_directories(dir);
  const auto log = dizo_log();
  write_file_atomic(dir / "a.csv", format_records_csv(log));
  EXPECT_EQ(read_records_csv(dir / "a.csv").records, log.records);
  EXPECT_THROW(read_records_csv(dir / "missing.csv"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace zotune::harness
