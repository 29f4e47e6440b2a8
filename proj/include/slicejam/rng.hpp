#pragma once

#include <cstdint>
#include <random>

namespace slicejam {

using Rng = std::mt19937_64;

// Independent random streams of one run. Arrivals have their own stream so that
// runs with and without an attack see the same workload for a given seed.
enum class Stream : std::uint64_t {
  kArrivals = 1,
  kGnbExplore = 2,
  kAdversary = 3,
  kDefense = 4,
  kInit = 5,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace slicejam
