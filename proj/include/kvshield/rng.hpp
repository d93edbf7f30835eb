#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace kvshield {

// All seeded generation in this project runs on std::mt19937_64. Its output
// sequence is fixed by the C++ standard, so keys and generated weights are
// reproducible across platforms and compilers. std::uniform_int_distribution
// is NOT portable; the bounded draw below is, and it is what the keystore
// format relies on.
using Rng = std::mt19937_64;

// Unbiased draw from [0, n) by rejection sampling.
inline std::uint64_t bounded(Rng& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("bounded: n must be >= 1");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

// Uniform in [0, 1) with 53 random bits, portable across platforms.
inline double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in [-1, 1).
inline double symmetric_uniform(Rng& rng) { return 2.0 * unit_uniform(rng) - 1.0; }

}  // namespace kvshield
