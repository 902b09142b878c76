#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tefb {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a path of tags.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(root);
  for (auto p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::uint64_t uniform_u64(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform_u64(rng, 0, n - 1));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace tefb
