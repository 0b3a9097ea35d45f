#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zotune/param_set.hpp"

namespace zotune {

enum class AnchorPrecision : std::uint8_t { F64, Q8 };

std::string_view to_string(AnchorPrecision precision);
AnchorPrecision precision_from_string(std::string_view name);

// One frozen layer of the reference model. Q8 layers keep per-layer affine
// codes: value = zero_point + scale * code, scale = (max - min) / 255.
struct AnchorLayer {
  std::string name;
  Role role = Role::Other;
  AnchorPrecision precision = AnchorPrecision::F64;
  std::vector<double> values;
  std::vector<std::uint8_t> codes;
  double scale = 0.0;
  double zero_point = 0.0;

  std::size_t dim() const;
  double at(std::size_t i) const {
    return precision == AnchorPrecision::F64 ? values[i]
                                             : zero_point + scale * codes[i];
  }
  std::vector<double> reconstruct() const;
};

AnchorLayer quantize_layer_q8(std::string name, Role role, std::span<const double> values);

class AnchorStore {
 public:
  AnchorStore(std::vector<AnchorLayer> layers, std::vector<Role> roles,
              std::size_t source_total_dim);

  const std::vector<AnchorLayer>& layers() const { return layers_; }
  const std::vector<Role>& roles() const { return roles_; }
  std::size_t source_total_dim() const { return source_total_dim_; }
  std::vector<std::string> names() const;

  std::size_t anchored_elements() const;
  // Anchored element count over the source model's total dimension.
  double extra_memory_ratio() const;

  // Index of `name` in layers(), if anchored.
  std::optional<std::size_t> find(std::string_view name) const;

  // Parameter-set index of every anchored layer, checking names and dims.
  // Throws StructuralError on a mismatch.
  std::vector<std::size_t> bind(const ParamSet& params) const;

 private:
  std::vector<AnchorLayer> layers_;
  std::vector<Role> roles_;
  std::size_t source_total_dim_ = 0;
};

// Frozen copy of every layer whose role is in `roles`. Throws ConfigError when
// nothing matches.
AnchorStore build_anchor(const ParamSet& params, const std::vector<Role>& roles,
                         AnchorPrecision precision);

// ||current^(l) - anchor^(l)||_2 for each anchored layer (or the named
// subset). Throws ConfigError for names not in the anchor, StructuralError on
// dim mismatch.
std::map<std::string, double> layer_gap_norms(
    const ParamSet& current, const AnchorStore& anchor,
    const std::optional<std::vector<std::string>>& layers = std::nullopt);

// Same distances, aligned with anchor.layers().
std::vector<double> anchored_gaps(const ParamSet& current, const AnchorStore& anchor);

// Copy of `base` with every anchored layer replaced by its reconstruction.
ParamSet overlay_anchor(const ParamSet& base, const AnchorStore& anchor);

}  // namespace zotune
