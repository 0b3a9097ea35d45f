#include "zotune/param_set.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "zotune/error.hpp"

namespace zotune {

namespace {

constexpr std::array<std::string_view, 7> kRoleNames = {
    "AttnQ", "AttnV", "AttnK", "AttnO", "Dense", "Bias", "Other"};

}  // namespace

std::string_view to_string(Role role) {
  return kRoleNames.at(static_cast<std::size_t>(role));
}

Role role_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
    if (kRoleNames[i] == name) return static_cast<Role>(i);
  }
  throw ConfigError(fmt::format("unknown layer role '{}'", name));
}

ParamSet::ParamSet(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("a parameter set needs at least one layer");
  std::size_t offset = 0;
  offsets_.reserve(layers_.size() + 1);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    if (layer.dim == 0) {
      throw ConfigError(fmt::format("layer '{}' has zero dimension", layer.name));
    }
    if (!by_name_.emplace(layer.name, i).second) {
      throw ConfigError(fmt::format("duplicate layer name '{}'", layer.name));
    }
    offsets_.push_back(offset);
    offset += layer.dim;
  }
  offsets_.push_back(offset);
  values_.assign(offset, 0.0);
}

std::span<double> ParamSet::values(std::size_t layer) {
  return std::span<double>(values_).subspan(offsets_.at(layer), layers_.at(layer).dim);
}

std::span<const double> ParamSet::values(std::size_t layer) const {
  return std::span<const double>(values_).subspan(offsets_.at(layer), layers_.at(layer).dim);
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamSet::index_of(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  throw ConfigError(fmt::format("unknown layer '{}'", name));
}

std::size_t ParamSet::max_layer_dim() const {
  std::size_t best = 0;
  for (const auto& layer : layers_) best = std::max(best, layer.dim);
  return best;
}

bool ParamSet::layers_equal(const ParamSet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.name != b.name || a.role != b.role || a.dim != b.dim) return false;
  }
  return true;
}

bool ParamSet::same_shape(const ParamSet& other) const { return layers_equal(other); }

void require_same_shape(const ParamSet& a, const ParamSet& b, std::string_view context) {
  if (!a.same_shape(b)) {
    throw StructuralError(fmt::format("{}: parameter layouts differ", context));
  }
}

std::vector<std::size_t> resolve_layers(const ParamSet& params,
                                        const std::optional<std::vector<std::string>>& names) {
  std::vector<std::size_t> out;
  if (!names) {
    out.resize(params.layer_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }
  out.reserve(names->size());
  for (const auto& name : *names) out.push_back(params.index_of(name));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void perturb_in_place(ParamSet& params, const NoiseHandle& handle,
                      const std::optional<std::vector<std::string>>& layer_filter) {
  if (!std::isfinite(handle.scale)) throw NumericError("perturbation scale is not finite");
  const auto layers = resolve_layers(params, layer_filter);
  for (std::size_t layer : layers) {
    LayerNoise noise(handle.seed, params.spec(layer).name);
    for (double& x : params.values(layer)) x += handle.scale * noise.next();
  }
}

void axpy_toward(ParamSet& params, const ParamSet& direction, double coefficient) {
  require_same_shape(params, direction, "axpy_toward");
  auto x = params.flat();
  const auto d = direction.flat();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i] + coefficient * d[i])) {
      throw NumericError(fmt::format("axpy_toward: non-finite result at element {}", i));
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += coefficient * d[i];
}

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw StructuralError(
        fmt::format("l2_distance: lengths differ ({} vs {})", a.size(), b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

std::vector<double> layer_distances(const ParamSet& current, const ParamSet& reference) {
  require_same_shape(current, reference, "layer_distances");
  std::vector<double> out(current.layer_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = l2_distance(current.values(i), reference.values(i));
  }
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace zotune
