// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mrl {

/// SplitMix64 finalizer. A bijection on 64-bit words, used both to seed
/// generators and to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed for stream `index` of `parent`.
constexpr std::uint64_t split_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(mix64(parent) ^ mix64(index ^ 0x5851f42d4c957f2dULL));
}

/// Seeded pseudo-random stream. Uniform draws are produced from raw 64-bit
/// output so that sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Beta(a, b) through two gamma draws.
  double beta(double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(engine_);
    const double y = gb(engine_);
    return x / (x + y);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Halton low-discrepancy point `index` (1-based recommended) in [0,1)^d.
inline std::vector<double> halton_point(std::uint64_t index, std::size_t dim) {
  static constexpr std::uint32_t kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                                              43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const std::uint32_t base = kPrimes[k % std::size(kPrimes)];
    double f = 1.0;
    double r = 0.0;
    std::uint64_t i = index + (k / std::size(kPrimes)) * 7919;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    out[k] = r;
  }
  return out;
}

}  // namespace mrl
