#pragma once

#include <cstdint>
#include <random>

namespace pancsynth {

using Rng = std::mt19937_64;

/// One N(0, 1) draw. A fresh distribution object is used per call so the
/// result depends only on the engine state.
inline double standard_normal(Rng& rng) { return std::normal_distribution<double>{}(rng); }

/// Uniform draw in [0, 1).
inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>{0.0, 1.0}(rng); }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for an independent stream: splitmix64(seed ^ splitmix64(stream)).
/// Batch jobs use stream = case_index * variants + variant so results do not
/// depend on scheduling order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

}  // namespace pancsynth
