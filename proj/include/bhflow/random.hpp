#pragma once

// Counter-based deterministic variates: draw k under seed s depends only on
// (s, k), so noise and particle samples are reproducible bit-for-bit on every
// platform and independent of evaluation order.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bhflow {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform on (0, 1].
inline double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(splitmix64(seed) ^ counter);
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal by Box-Muller on two consecutive counters.
inline double counter_normal(std::uint64_t seed, std::uint64_t index) {
  const double u1 = counter_uniform(seed, 2 * index);
  const double u2 = counter_uniform(seed, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace bhflow
