// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the unit suites and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mrl/erm.hpp"
#include "mrl/relu_net.hpp"
#include "mrl/rng.hpp"

namespace mrl::testing {

/// n points uniform on [0,1]^d with fair random labels.
inline Dataset random_dataset(std::size_t d, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.dim = d;
  data.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) data.inputs.push_back(rng.uniform());
    data.labels.push_back(rng.uniform() < 0.5 ? -1 : 1);
  }
  return data;
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double worst_rel_error = 0.0;
};

/// Compares the reverse-mode gradient with central differences of
/// regularized_objective. A coordinate is skipped when a step of +-h changes
/// the activation or clip pattern, or (penalized p < 2) when |theta_k| < 1e-2
/// puts it near the kink of |w|^p.
inline GradientCheck check_gradient(const Parametrization& params, const ClipSpec& spec,
                                    const Dataset& data, double lambda, double p, double h = 1e-5) {
  constexpr double kMu = 1e-8;
  const auto g = objective_gradient(params, spec, data, lambda, p, kMu);
  const auto base = activation_pattern(params, spec, data);
  GradientCheck out;
  Parametrization plus = params;
  Parametrization minus = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double w = params.values()[k];
    plus.values()[k] = w + h;
    minus.values()[k] = w - h;
    const bool kink = lambda > 0.0 && p < 2.0 && std::abs(w) < 1e-2;
    if (kink || activation_pattern(plus, spec, data) != base ||
        activation_pattern(minus, spec, data) != base) {
      ++out.skipped;
    } else {
      const double fd = (regularized_objective(plus, spec, data, lambda, p) -
                         regularized_objective(minus, spec, data, lambda, p)) /
                        (2.0 * h);
      const double denom = std::max({std::abs(g[k]), std::abs(fd), 1e-6});
      out.worst_rel_error = std::max(out.worst_rel_error, std::abs(g[k] - fd) / denom);
      ++out.checked;
    }
    plus.values()[k] = w;
    minus.values()[k] = w;
  }
  return out;
}

/// Random architecture no larger than (3, 8, 8, 1).
inline Architecture random_small_architecture(Rng& rng) {
  std::vector<std::size_t> w{1 + static_cast<std::size_t>(rng.next() % 3)};
  const std::size_t hidden = 1 + rng.next() % 2;
  for (std::size_t l = 0; l < hidden; ++l) w.push_back(1 + static_cast<std::size_t>(rng.next() % 8));
  w.push_back(1);
  return Architecture(w);
}

}  // namespace mrl::testing
