#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace zotune {

// Identifier written into checkpoints. Bump it if either the bit generator or
// the normal sampler changes; streams are part of the on-disk contract.
inline constexpr std::string_view kRngAlgorithm =
    "xoshiro256**/splitmix64-seed/as241-inverse-normal/v1";

std::uint64_t splitmix64(std::uint64_t& state);

// Stateless 64-bit finalizer (the splitmix64 output function).
std::uint64_t mix64(std::uint64_t x);

// FNV-1a over the bytes of a layer name.
std::uint64_t hash_name(std::string_view name);

// Seed for iteration `t` of a run seeded with `base`; streams for distinct
// iterations do not overlap in practice.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t t);

// Inverse of the standard normal CDF (Wichura, AS241 PPND16). p in (0, 1).
double normal_quantile(double p);

// xoshiro256** seeded through splitmix64. Output is identical on every
// platform; normals come from the inverse CDF of a 53-bit open-interval
// uniform, so no platform-dependent library transcendental other than
// log/sqrt is involved.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal() { return normal_quantile(uniform()); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::array<std::uint64_t, 4> s_{};
};

// Seed plus scale: enough to regenerate a perturbation instead of storing it.
struct NoiseHandle {
  std::uint64_t seed = 0;
  double scale = 0.0;
};

// Standard-normal stream for one layer under one seed. The layer name is
// folded into the seed so that filtering layers never shifts another layer's
// draws.
class LayerNoise {
 public:
  LayerNoise(std::uint64_t seed, std::string_view layer_name)
      : rng_(seed ^ hash_name(layer_name)) {}

  double next() { return rng_.normal(); }

 private:
  Xoshiro256 rng_;
};

}  // namespace zotune
