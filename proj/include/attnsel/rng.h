#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace attnsel {

// Name recorded in every result file next to the seed.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64";

// SplitMix64 finalizer over the pair; used to derive per-image and per-purpose seeds.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

// FNV-1a 64 of the UTF-8 bytes.
std::uint64_t stable_hash(std::string_view text);

// Seeded 64-bit generator. Conversions to floating point are done here rather
// than through <random> distributions, whose outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller (one draw per call, two uniforms consumed).
  double normal();

  // Independent child generator for a named purpose.
  Rng split(std::uint64_t stream) const { return Rng(mix64(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace attnsel
