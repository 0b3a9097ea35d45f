#include "zotune/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "zotune/error.hpp"
#include "zotune/rng.hpp"

namespace zotune {

DatasetKind dataset_kind_from_string(std::string_view name) {
  if (name == "gaussian_blobs") return DatasetKind::GaussianBlobs;
  if (name == "two_spirals") return DatasetKind::TwoSpirals;
  if (name == "token_sequences") return DatasetKind::TokenSequences;
  throw ConfigError(fmt::format("unknown dataset kind '{}'", name));
}

namespace {

void blob_row(const DatasetOptions& o, std::int32_t label, Xoshiro256& rng, double* out) {
  const double angle =
      2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(o.classes);
  for (std::size_t j = 0; j < o.features; ++j) out[j] = rng.normal();
  out[0] += o.separation * std::cos(angle);
  if (o.features > 1) out[1] += o.separation * std::sin(angle);
}

void spiral_row(const DatasetOptions& o, std::int32_t label, Xoshiro256& rng, double* out) {
  const double t = 0.25 + 0.75 * rng.uniform();
  const double phase = 3.0 * std::numbers::pi * t + std::numbers::pi * label;
  out[0] = t * std::cos(phase) + o.spiral_noise * rng.normal();
  out[1] = t * std::sin(phase) + o.spiral_noise * rng.normal();
}

void token_row(const DatasetOptions& o, std::int32_t label, Xoshiro256& rng, double* out) {
  const std::size_t half = o.vocab / 2;
  const std::size_t majority = o.seq_len / 2 + 1;
  // Number of low-half tokens: >= majority for label 1, < majority otherwise.
  const std::size_t low = label == 1 ? majority + rng.below(o.seq_len - majority + 1)
                                     : rng.below(majority);
  for (std::size_t i = 0; i < o.seq_len; ++i) {
    const bool pick_low = i < low;
    const std::uint64_t token =
        pick_low ? rng.below(half) : half + rng.below(o.vocab - half);
    out[i] = static_cast<double>(token);
  }
  // Fisher-Yates so positions carry no signal.
  for (std::size_t i = o.seq_len; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(out[i - 1], out[j]);
  }
}

}  // namespace

std::vector<Batch> make_dataset(const DatasetOptions& o, std::uint64_t seed) {
  if (o.batches == 0 || o.batch_size == 0) throw ConfigError("dataset needs n >= 1 and batch_size >= 1");
  std::size_t cols = 0;
  std::size_t classes = o.classes;
  switch (o.kind) {
    case DatasetKind::GaussianBlobs:
      if (o.features == 0 || o.classes < 2) throw ConfigError("blobs need features and >= 2 classes");
      cols = o.features;
      break;
    case DatasetKind::TwoSpirals:
      cols = 2;
      classes = 2;
      break;
    case DatasetKind::TokenSequences:
      if (o.vocab < 2 || o.seq_len == 0) throw ConfigError("tokens need vocab >= 2, seq_len >= 1");
      cols = o.seq_len;
      classes = 2;
      break;
  }
  Xoshiro256 rng(seed);
  std::vector<Batch> out(o.batches);
  std::size_t row_index = 0;
  for (auto& batch : out) {
    batch.rows = o.batch_size;
    batch.cols = cols;
    batch.inputs.resize(batch.rows * cols);
    batch.labels.resize(batch.rows);
    for (std::size_t r = 0; r < batch.rows; ++r, ++row_index) {
      const auto label = static_cast<std::int32_t>(row_index % classes);
      batch.labels[r] = label;
      double* dst = batch.inputs.data() + r * cols;
      switch (o.kind) {
        case DatasetKind::GaussianBlobs: blob_row(o, label, rng, dst); break;
        case DatasetKind::TwoSpirals: spiral_row(o, label, rng, dst); break;
        case DatasetKind::TokenSequences: token_row(o, label, rng, dst); break;
      }
    }
  }
  return out;
}

std::vector<Batch> make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed) {
  DatasetOptions options;
  options.kind = kind;
  options.batches = n;
  return make_dataset(options, seed);
}

namespace {

double parse_double(std::string_view field, std::size_t line) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ConfigError(fmt::format("csv line {}: '{}' is not a number", line, field));
  }
  return value;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::vector<Batch> load_csv_dataset(const std::filesystem::path& path, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open csv '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv is empty (missing header row)");
  const std::size_t columns = split(line).size();
  if (columns < 2) throw ConfigError("csv needs at least one feature column and a label");

  std::vector<double> features;
  std::vector<std::int32_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    if (fields.size() != columns) {
      throw ConfigError(fmt::format("csv line {}: expected {} fields, got {}", line_no, columns,
                                    fields.size()));
    }
    for (std::size_t c = 0; c + 1 < columns; ++c) features.push_back(parse_double(fields[c], line_no));
    const double label = parse_double(fields.back(), line_no);
    if (label < 0.0 || label != std::floor(label)) {
      throw ConfigError(fmt::format("csv line {}: label must be a non-negative integer", line_no));
    }
    labels.push_back(static_cast<std::int32_t>(label));
  }
  if (labels.empty()) throw ConfigError("csv has no data rows");

  const std::size_t cols = columns - 1;
  std::vector<Batch> out;
  for (std::size_t start = 0; start < labels.size(); start += batch_size) {
    const std::size_t rows = std::min(batch_size, labels.size() - start);
    Batch batch;
    batch.rows = rows;
    batch.cols = cols;
    batch.inputs.assign(features.begin() + static_cast<std::ptrdiff_t>(start * cols),
                        features.begin() + static_cast<std::ptrdiff_t>((start + rows) * cols));
    batch.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                        labels.begin() + static_cast<std::ptrdiff_t>(start + rows));
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace zotune
