#pragma once

#include <cstdint>
#include <random>

namespace rmtopo {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream seed for sub-stream `id` of a root seed (e.g. one per array).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t id) {
  return mix_seed(mix_seed(root) ^ mix_seed(id + 0x632be59bd9b4e019ULL));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(Rng& rng, double mean, double sigma) {
  return std::normal_distribution<double>(mean, sigma)(rng);
}

/// Normal draw resampled until it lies at or above `lower`.
inline double truncated_normal(Rng& rng, double mean, double sigma, double lower) {
  std::normal_distribution<double> dist(mean, sigma);
  for (int i = 0; i < 1000; ++i) {
    double v = dist(rng);
    if (v >= lower) return v;
  }
  return lower > mean ? lower : mean;
}

}  // namespace rmtopo
