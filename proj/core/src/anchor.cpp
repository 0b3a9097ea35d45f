#include "zotune/anchor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "zotune/error.hpp"

namespace zotune {

std::string_view to_string(AnchorPrecision precision) {
  return precision == AnchorPrecision::F64 ? "f64" : "q8";
}

AnchorPrecision precision_from_string(std::string_view name) {
  if (name == "f64") return AnchorPrecision::F64;
  if (name == "q8") return AnchorPrecision::Q8;
  throw ConfigError(fmt::format("unknown anchor precision '{}' (expected f64 or q8)", name));
}

std::size_t AnchorLayer::dim() const {
  return precision == AnchorPrecision::F64 ? values.size() : codes.size();
}

std::vector<double> AnchorLayer::reconstruct() const {
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

AnchorLayer quantize_layer_q8(std::string name, Role role, std::span<const double> values) {
  AnchorLayer layer{std::move(name), role, AnchorPrecision::Q8, {}, {}, 0.0, 0.0};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  layer.zero_point = *lo;
  layer.scale = (*hi - *lo) / 255.0;
  layer.codes.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double code = 0.0;
    if (layer.scale > 0.0) {
      code = std::clamp(std::nearbyint((values[i] - layer.zero_point) / layer.scale), 0.0, 255.0);
    }
    layer.codes[i] = static_cast<std::uint8_t>(code);
  }
  return layer;
}

AnchorStore::AnchorStore(std::vector<AnchorLayer> layers, std::vector<Role> roles,
                         std::size_t source_total_dim)
    : layers_(std::move(layers)), roles_(std::move(roles)), source_total_dim_(source_total_dim) {
  if (layers_.empty()) throw ConfigError("anchor holds no layers");
}

std::vector<std::string> AnchorStore::names() const {
  std::vector<std::string> out;
  out.reserve(layers_.size());
  for (const auto& layer : layers_) out.push_back(layer.name);
  return out;
}

std::size_t AnchorStore::anchored_elements() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.dim();
  return n;
}

double AnchorStore::extra_memory_ratio() const {
  return static_cast<double>(anchored_elements()) / static_cast<double>(source_total_dim_);
}

std::optional<std::size_t> AnchorStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> AnchorStore::bind(const ParamSet& params) const {
  std::vector<std::size_t> out;
  out.reserve(layers_.size());
  for (const auto& layer : layers_) {
    const auto idx = params.find(layer.name);
    if (!idx) {
      throw StructuralError(fmt::format("anchored layer '{}' missing from parameters", layer.name));
    }
    if (params.spec(*idx).dim != layer.dim()) {
      throw StructuralError(fmt::format("anchored layer '{}' has dim {} but parameters have {}",
                                        layer.name, layer.dim(), params.spec(*idx).dim));
    }
    out.push_back(*idx);
  }
  return out;
}

AnchorStore build_anchor(const ParamSet& params, const std::vector<Role>& roles,
                         AnchorPrecision precision) {
  std::vector<AnchorLayer> layers;
  for (std::size_t i = 0; i < params.layer_count(); ++i) {
    const auto& spec = params.spec(i);
    if (std::find(roles.begin(), roles.end(), spec.role) == roles.end()) continue;
    const auto values = params.values(i);
    if (precision == AnchorPrecision::Q8) {
      layers.push_back(quantize_layer_q8(spec.name, spec.role, values));
    } else {
      layers.push_back(AnchorLayer{spec.name, spec.role, AnchorPrecision::F64,
                                   std::vector<double>(values.begin(), values.end()),
                                   {}, 0.0, 0.0});
    }
  }
  if (layers.empty()) {
    std::string wanted;
    for (Role r : roles) wanted += fmt::format("{}{}", wanted.empty() ? "" : ",", to_string(r));
    throw ConfigError(fmt::format("no layer matches anchor roles {{{}}}", wanted));
  }
  return AnchorStore(std::move(layers), roles, params.total_dim());
}

namespace {

double gap_of(std::span<const double> current, const AnchorLayer& layer) {
  double sum = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i) {
    const double diff = current[i] - layer.at(i);
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

}  // namespace

std::vector<double> anchored_gaps(const ParamSet& current, const AnchorStore& anchor) {
  const auto bound = anchor.bind(current);
  std::vector<double> out(bound.size());
  for (std::size_t k = 0; k < bound.size(); ++k) {
    out[k] = gap_of(current.values(bound[k]), anchor.layers()[k]);
  }
  return out;
}

std::map<std::string, double> layer_gap_norms(
    const ParamSet& current, const AnchorStore& anchor,
    const std::optional<std::vector<std::string>>& layers) {
  std::map<std::string, double> out;
  auto add = [&](const AnchorLayer& layer) {
    const auto idx = current.find(layer.name);
    if (!idx || current.spec(*idx).dim != layer.dim()) {
      throw StructuralError(fmt::format("layer '{}' does not match its anchor", layer.name));
    }
    out[layer.name] = gap_of(current.values(*idx), layer);
  };
  if (!layers) {
    for (const auto& layer : anchor.layers()) add(layer);
    return out;
  }
  for (const auto& name : *layers) {
    const auto k = anchor.find(name);
    if (!k) throw ConfigError(fmt::format("layer '{}' is not anchored", name));
    add(anchor.layers()[*k]);
  }
  return out;
}

ParamSet overlay_anchor(const ParamSet& base, const AnchorStore& anchor) {
  ParamSet out = base;
  const auto bound = anchor.bind(base);
  for (std::size_t k = 0; k < bound.size(); ++k) {
    auto dst = out.values(bound[k]);
    const auto& layer = anchor.layers()[k];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = layer.at(i);
  }
  return out;
}

}  // namespace zotune
