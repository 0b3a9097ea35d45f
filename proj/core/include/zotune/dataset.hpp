#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "zotune/batch.hpp"

namespace zotune {

enum class DatasetKind { GaussianBlobs, TwoSpirals, TokenSequences };

DatasetKind dataset_kind_from_string(std::string_view name);

struct DatasetOptions {
  DatasetKind kind = DatasetKind::GaussianBlobs;
  std::size_t batches = 8;
  std::size_t batch_size = 32;
  // Blobs: feature dimension, class count, and the radius of the circle the
  // class means sit on (unit-variance clusters).
  std::size_t features = 2;
  std::size_t classes = 3;
  double separation = 4.0;
  // Spirals: Gaussian jitter on each point.
  double spiral_noise = 0.05;
  // Tokens: label 1 iff the majority of tokens come from the lower half of
  // the vocabulary. An odd seq_len avoids ties.
  std::size_t seq_len = 9;
  std::size_t vocab = 16;
};

// Deterministic synthetic data: `options.batches` batches. Labels cycle
// through the classes so every batch is balanced up to one row.
std::vector<Batch> make_dataset(const DatasetOptions& options, std::uint64_t seed);
std::vector<Batch> make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed);

// Tabular classification CSV: one header row, numeric feature columns, last
// column an integer label >= 0. Rows are chunked into batches of batch_size
// (the last batch may be smaller). Throws ConfigError on malformed input.
std::vector<Batch> load_csv_dataset(const std::filesystem::path& path, std::size_t batch_size);

}  // namespace zotune
