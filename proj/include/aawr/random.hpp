#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace aawr {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index so sibling streams are decorrelated.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  // 53 random bits; independent of the standard library's distribution implementation.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Draws an index from a nonnegative weight vector (need not be normalized).
template <typename Derived>
int sample_categorical(const Eigen::DenseBase<Derived>& weights, Rng& rng) {
  const double total = weights.sum();
  double u = uniform01(rng) * total;
  const Eigen::Index n = weights.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    u -= weights(i);
    if (u < 0.0) return static_cast<int>(i);
  }
  // Rounding fallthrough: last index with positive mass.
  for (Eigen::Index i = n - 1; i >= 0; --i)
    if (weights(i) > 0.0) return static_cast<int>(i);
  return static_cast<int>(n - 1);
}

inline int uniform_int(Rng& rng, int n) {
  return static_cast<int>(uniform01(rng) * n) % n;
}

}  // namespace aawr
