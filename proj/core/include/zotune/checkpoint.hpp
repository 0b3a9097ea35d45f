#pragma once

#include <filesystem>
#include <iosfwd>

#include "zotune/anchor.hpp"
#include "zotune/param_set.hpp"

namespace zotune {

// Binary little-endian container:
//
//   magic "ZOTCKPT" 0x01 | u32 kind (0 params, 1 anchor) | str rng_algorithm
//   | u64 source_total_dim | u32 role_filter_count | u8 roles...
//   | u32 layer_count | per layer:
//       str name | u8 role | u64 dim | u8 precision (0 f64, 1 q8)
//       | f64: dim x f64   q8: f64 scale, f64 zero_point, dim x u8
//
// where str = u32 length + bytes. Doubles are stored as their IEEE-754 bit
// patterns, so a round trip is bit-exact. Writes go to a temporary file that
// is renamed into place.

void write_params(std::ostream& out, const ParamSet& params);
ParamSet read_params(std::istream& in);

void write_anchor(std::ostream& out, const AnchorStore& anchor);
AnchorStore read_anchor(std::istream& in);

void save_params(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_params(const std::filesystem::path& path);

void save_anchor(const std::filesystem::path& path, const AnchorStore& anchor);
AnchorStore load_anchor(const std::filesystem::path& path);

}  // namespace zotune
