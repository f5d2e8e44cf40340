#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sensched {

/// Random source used throughout. Always owned by the caller; no module
/// keeps hidden generator state.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 bits of resolution. Hand-rolled so the
/// draw sequence is identical across standard-library implementations.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). n must be positive.
inline int uniform_below(Rng& rng, int n) {
  int k = static_cast<int>(uniform_unit(rng) * static_cast<double>(n));
  return k < n ? k : n - 1;  // guard against u*n rounding up to n
}

/// Uniform double in [lo, hi).
inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

/// Standard normal via Box-Muller. Consumes exactly two draws and keeps no
/// cached spare.
inline double gaussian(Rng& rng) {
  double u1 = 1.0 - uniform_unit(rng);  // (0, 1]
  double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

/// Fisher-Yates shuffle with the caller's generator.
template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
    int j = uniform_below(rng, i + 1);
    std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
  }
}

}  // namespace sensched
