#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace zotune {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments (unknown layer, steps = 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or layout mismatch between parameter sets, anchors and oracles.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared in a loss or in parameters.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what,
                        std::optional<std::size_t> query = std::nullopt)
      : Error(what), query_(query) {}

  // Index of the estimator query that produced the non-finite value, if any.
  std::optional<std::size_t> query() const { return query_; }

 private:
  std::optional<std::size_t> query_;
};

}  // namespace zotune
