#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "zotune/anchor.hpp"
#include "zotune/optimizer.hpp"
#include "zotune/param_set.hpp"
#include "zotune/projection.hpp"

namespace zotune::harness {

enum class TaskKind { QuadraticHetero, BlobsLogreg, BlobsMlp, TokensAttention };

std::string_view to_string(TaskKind task);
TaskKind task_from_string(std::string_view name);

// task.* keys. Each task reads the subset it understands.
struct TaskOptions {
  // quadratic_hetero
  std::size_t layers = 4;
  std::size_t dim = 16;
  double radius_min = 1.0;
  double radius_span = 10.0;
  double curvature = 1.0;
  double curvature_span = 1.0;
  double noise = 0.0;
  // classification tasks
  std::size_t batches = 8;
  std::size_t features = 2;
  std::size_t classes = 3;
  double separation = 4.0;
  std::size_t hidden = 16;
  std::size_t d_model = 32;
  std::size_t seq_len = 9;
  std::size_t vocab = 16;
  std::optional<std::filesystem::path> data_csv;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::QuadraticHetero;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  TrainConfig train;
  // Learning rate of fo_ref arms; train.lr when unset.
  std::optional<double> fo_lr;
  // Present iff methods contains dizo.
  std::optional<ProjectionConfig> projection;
  // Warm-start checkpoint; the model's own initialization when unset.
  std::optional<std::filesystem::path> warmstart;
  AnchorPrecision anchor_precision = AnchorPrecision::F64;
  // The task's default roles when unset.
  std::optional<std::vector<Role>> anchor_roles;
  TaskOptions task_options;
  std::filesystem::path output_dir = "runs";
  // Iterations-to-threshold target: threshold_fraction * initial clean loss,
  // or threshold_loss when set.
  double threshold_fraction = 0.1;
  std::optional<double> threshold_loss;
  std::size_t varsym_samples = 10000;
  std::vector<std::size_t> rate_budgets{500, 1000, 2000, 4000, 8000};
  double rate_lr0 = 0.5;
  std::size_t rate_seeds = 20;
  std::size_t rate_checkpoints = 20;

  bool has_method(Method method) const;
};

// Parses flat `key = value` text. `#` starts a comment; lists are
// comma-separated and may be wrapped in brackets. Unknown, duplicate, missing
// or malformed keys throw ConfigError naming the key and its line.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key with its resolved value, defaults included.
nlohmann::json resolved_config(const ExperimentConfig& config);

}  // namespace zotune::harness
