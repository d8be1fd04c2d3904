#pragma once

#include <cstdint>
#include <random>

namespace mclink {

/// splitmix64 step; used to derive independent stream seeds from one master
/// seed so that adding/removing draws in one stream never shifts another.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) { return mix64(seed ^ mix64(stream)); }

inline uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index) {
  return mix64(derive_seed(seed, stream) ^ mix64(index + 0x5bd1e995ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

inline double normal(Rng& rng, double stddev) {
  if (stddev <= 0.0) return 0.0;
  std::normal_distribution<double> d(0.0, stddev);
  return d(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

}  // namespace mclink
