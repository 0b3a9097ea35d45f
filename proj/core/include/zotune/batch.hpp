#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace zotune {

// A mini-batch. `inputs` is row-major rows x cols. Classifiers read `labels`;
// the quadratic task reads `targets` as a shift of its optimum (empty means
// no shift). Token models store integer token ids in `inputs`.
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> inputs;
  std::vector<std::int32_t> labels;
  std::vector<double> targets;

  std::size_t size() const { return rows; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * cols, cols);
  }

  bool operator==(const Batch&) const = default;
};

// Throws StructuralError if the inputs/labels sizes disagree with rows/cols,
// rows == 0, or a label is negative or >= num_classes (when num_classes > 0).
void validate_batch(const Batch& batch, std::size_t num_classes = 0);

// Row-wise concatenation; all batches must share `cols`.
Batch concat(std::span<const Batch> batches);

}  // namespace zotune
