#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace lorekt {

// The engine is standardised; the helpers below avoid the implementation-defined
// distribution algorithms so that seeded streams agree across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

// Box-Muller; consumes two draws per sample.
inline double normal(Rng& rng, double mean, double stddev) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Number of failures before the first success, success probability p.
inline std::uint64_t geometric(Rng& rng, double p) {
  if (p >= 1.0) return 0;
  const double u = 1.0 - uniform01(rng);
  return static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

template <typename V>
void shuffle(std::vector<V>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace lorekt
