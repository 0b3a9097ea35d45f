#include "zotune/harness/tasks.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "zotune/checkpoint.hpp"
#include "zotune/dataset.hpp"
#include "zotune/error.hpp"
#include "zotune/models.hpp"
#include "zotune/rng.hpp"

namespace zotune::harness {

namespace {

constexpr std::uint64_t kDataSalt = 0xDA7A5EEDULL;

std::vector<Batch> classification_data(const ExperimentConfig& config, DatasetKind kind,
                                       std::uint64_t seed) {
  const auto& t = config.task_options;
  if (t.data_csv) return load_csv_dataset(*t.data_csv, config.train.batch_size);
  DatasetOptions options;
  options.kind = kind;
  options.batches = t.batches;
  options.batch_size = config.train.batch_size;
  options.features = t.features;
  options.classes = kind == DatasetKind::TokenSequences ? 2 : t.classes;
  options.separation = t.separation;
  options.seq_len = t.seq_len;
  options.vocab = t.vocab;
  return make_dataset(options, mix64(seed ^ kDataSalt));
}

std::size_t class_count(const std::vector<Batch>& data) {
  std::int32_t top = 0;
  for (const auto& b : data) {
    for (auto label : b.labels) top = std::max(top, label);
  }
  return static_cast<std::size_t>(top) + 1;
}

}  // namespace

TaskInstance make_task(const ExperimentConfig& config, std::uint64_t seed) {
  const auto& t = config.task_options;
  if (t.data_csv && (config.task == TaskKind::QuadraticHetero ||
                     config.task == TaskKind::TokensAttention)) {
    throw ConfigError(fmt::format("task.data_csv is not supported by task {}",
                                  to_string(config.task)));
  }
  TaskInstance task;
  switch (config.task) {
    case TaskKind::QuadraticHetero: {
      QuadraticTask::HeteroOptions options;
      options.layers = t.layers;
      options.dim = t.dim;
      options.radius_min = t.radius_min;
      options.radius_span = t.radius_span;
      options.curvature = t.curvature;
      options.curvature_span = t.curvature_span;
      auto model = std::make_unique<QuadraticTask>(QuadraticTask::heterogeneous(options, seed));
      if (t.noise < 0.0) throw ConfigError("task.noise must be >= 0");
      task.train = model->make_batches(std::max<std::size_t>(t.batches, 1), t.noise,
                                       mix64(seed ^ kDataSalt));
      task.eval = model->make_batches(1, 0.0, 0).front();
      task.oracle = std::move(model);
      task.default_roles = {Role::Dense};
      break;
    }
    case TaskKind::BlobsLogreg:
    case TaskKind::BlobsMlp: {
      task.train = classification_data(config, DatasetKind::GaussianBlobs, seed);
      const std::size_t features = task.train.front().cols;
      const std::size_t classes = std::max(class_count(task.train), t.classes);
      if (config.task == TaskKind::BlobsLogreg) {
        task.oracle = std::make_unique<SoftmaxRegression>(features, classes, seed);
      } else {
        task.oracle = std::make_unique<Mlp>(features, t.hidden, classes, seed);
      }
      task.eval = concat(task.train);
      task.default_roles = {Role::Dense};
      break;
    }
    case TaskKind::TokensAttention: {
      task.train = classification_data(config, DatasetKind::TokenSequences, seed);
      AttentionOptions options;
      options.vocab = t.vocab;
      options.seq_len = t.seq_len;
      options.d_model = t.d_model;
      options.classes = 2;
      task.oracle = std::make_unique<AttentionModel>(options, seed);
      task.eval = concat(task.train);
      task.default_roles = {Role::AttnQ, Role::AttnV};
      break;
    }
  }
  task.init = task.oracle->param_template();
  if (config.warmstart) {
    auto loaded = load_params(*config.warmstart);
    require_same_shape(loaded, task.init, "warm-start checkpoint");
    task.init = std::move(loaded);
  }
  return task;
}

}  // namespace zotune::harness
