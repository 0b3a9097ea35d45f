#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "zotune/rng.hpp"

namespace zotune {

enum class Role : std::uint8_t { AttnQ, AttnV, AttnK, AttnO, Dense, Bias, Other };

std::string_view to_string(Role role);
// Throws ConfigError on an unknown name.
Role role_from_string(std::string_view name);

struct LayerSpec {
  std::string name;
  Role role = Role::Other;
  std::size_t dim = 0;
};

// Layer-partitioned parameter vector. Values live in one contiguous block;
// each layer is a fixed, ordered slice of it.
class ParamSet {
 public:
  ParamSet() = default;
  // Zero-initialized. Throws ConfigError on empty dims or duplicate names.
  explicit ParamSet(std::vector<LayerSpec> layers);

  std::size_t layer_count() const { return layers_.size(); }
  std::size_t total_dim() const { return values_.size(); }
  const LayerSpec& spec(std::size_t layer) const { return layers_.at(layer); }
  const std::vector<LayerSpec>& specs() const { return layers_; }

  std::span<double> values(std::size_t layer);
  std::span<const double> values(std::size_t layer) const;
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  std::optional<std::size_t> find(std::string_view name) const;
  // Throws ConfigError when the layer does not exist.
  std::size_t index_of(std::string_view name) const;

  std::size_t max_layer_dim() const;

  // Same layer names, roles and dims in the same order.
  bool same_shape(const ParamSet& other) const;

  bool operator==(const ParamSet& other) const {
    return layers_equal(other) && values_ == other.values_;
  }

 private:
  bool layers_equal(const ParamSet& other) const;

  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// Throws StructuralError unless a.same_shape(b).
void require_same_shape(const ParamSet& a, const ParamSet& b, std::string_view context);

// Resolves optional layer names to indices in layer order (all layers when
// empty).
// Throws ConfigError on unknown names.
std::vector<std::size_t> resolve_layers(const ParamSet& params,
                                        const std::optional<std::vector<std::string>>& names);

// x <- x + handle.scale * z for every element of the selected layers, where z
// is drawn from LayerNoise(handle.seed, layer name) in element order.
void perturb_in_place(ParamSet& params, const NoiseHandle& handle,
                      const std::optional<std::vector<std::string>>& layer_filter = std::nullopt);

// params <- params + coefficient * direction. Throws StructuralError on a
// shape mismatch and NumericError (leaving params untouched) if the result
// would not be finite.
void axpy_toward(ParamSet& params, const ParamSet& direction, double coefficient);

double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);

// Euclidean norm of (current - reference) per layer, in layer order.
std::vector<double> layer_distances(const ParamSet& current, const ParamSet& reference);

bool all_finite(std::span<const double> v);

}  // namespace zotune
