#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace chinv {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a stream tag
/// (splitmix64 finalizer). Chain, training and init draws use separate
/// streams so that adding draws to one never perturbs another.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  return std::generate_canonical<double, 53>(rng);
}

/// Inverse-CDF draw over nonnegative weights; consumes exactly one uniform.
/// Every categorical draw in the library goes through here, so two
/// distributions with bitwise-equal weights make bitwise-equal choices.
std::size_t sample_index(std::span<const double> weights, Rng& rng);

/// Uniform draw from {0, ..., n-1}; consumes exactly one uniform.
inline int uniform_int(int n, Rng& rng) {
  const int i = static_cast<int>(uniform01(rng) * n);
  return i >= n ? n - 1 : i;
}

}  // namespace chinv
