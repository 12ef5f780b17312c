#pragma once

#include <cstdint>
#include <random>

namespace tmsattack {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent sub-seed for (master seed, entity, stream); lets parallel and
/// serial runs draw identical numbers.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t entity, std::uint64_t stream = 0) {
  return splitmix64(splitmix64(splitmix64(master) ^ entity) ^ (stream * 0xD1B54A32D192ED03ULL));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t entity, std::uint64_t stream = 0) {
  return Rng(derive_seed(master, entity, stream));
}

/// Uniform draw in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Beta variate via the ratio of two gamma variates.
inline double sample_beta(Rng& rng, double alpha, double beta) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

}  // namespace tmsattack
