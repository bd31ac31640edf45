#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace urnlab {

//! splitmix64 stream. Uniform doubles take the top 53 bits of each output, so
//! a seed reproduces the same draws in any language that implements the
//! same recurrence.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  //! Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  //! Unit-rate exponential, -ln(1 - u).
  double exponential() { return -std::log1p(-uniform()); }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

//! One splitmix64 output for state x; used to derive independent seeds.
inline std::uint64_t splitmix64(std::uint64_t x) { return SplitMix64(x).next(); }

//! Inverse-CDF lookup: the first index whose cumulative weight exceeds u.
//! Zero-weight outcomes are never returned.
inline std::size_t inverse_cdf(std::span<const double> weights, double u) {
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0)
      continue;
    cum += weights[i];
    last_positive = i;
    if (u < cum)
      return i;
  }
  return last_positive;
}

} // namespace urnlab
