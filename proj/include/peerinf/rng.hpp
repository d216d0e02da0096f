#pragma once

#include <cstdint>
#include <random>

namespace peerinf {

// splitmix64 finalizer. All randomness in the library is derived from a
// single master seed through sub_seed chains, so any run is reproducible
// from (config, seed) alone.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream `k` of a master seed. Streams are independent for distinct k and
// nest: sub_seed(sub_seed(s, a), b) addresses replicate b of sweep a.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t k) {
  return mix64(master + (k + 1) * 0x9E3779B97F4A7C15ULL);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Uniform draw on [0,1) used for all inverse-CDF sampling below; keeps the
// consumption pattern of the engine explicit and easy to document.
inline double runif(std::mt19937_64& eng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(eng);
}

inline double rnorm(std::mt19937_64& eng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(eng);
}

// Index in [0, k) via one uniform draw.
inline int rindex(std::mt19937_64& eng, int k) {
  int i = static_cast<int>(runif(eng) * k);
  return i >= k ? k - 1 : i;
}

}  // namespace peerinf
