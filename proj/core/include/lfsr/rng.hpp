#pragma once

#include <cstdint>
#include <string_view>

namespace lfsr {

// SplitMix64 generator with a single 64-bit state word.
//
// Streams are derived by label rather than by drawing from the parent, so
// `Rng(seed).split("degrade").split("17")` names the same stream on every
// platform and regardless of what else was drawn before.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  Rng split(std::string_view label) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

}  // namespace lfsr
