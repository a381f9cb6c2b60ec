// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// Square-loss empirical risk of clipped networks, the l_p-regularized
// objective with its reverse-mode gradient, and an approximate lambda-ERM
// solver (multi-restart projected gradient descent with min-norm selection).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrl/error.hpp"
#include "mrl/relu_net.hpp"
#include "mrl/rng.hpp"

namespace mrl {

/// n labelled points in [0,1]^d, inputs stored row-major.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> inputs;
  std::vector<int> labels;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> input(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * dim, dim);
  }

  /// Throws InvalidArgument on the first broken invariant.
  void validate() const {
    if (labels.empty()) throw InvalidArgument("dataset is empty");
    if (inputs.size() != labels.size() * dim) {
      throw DimensionMismatch("dataset inputs and labels have different lengths");
    }
    for (double v : inputs) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("dataset input outside [0,1]^d");
    }
    for (int y : labels) {
      if (y != 1 && y != -1) throw InvalidArgument("dataset label not in {-1,+1}");
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct TrainConfig {
  double lambda = 0.0;
  double p = 2.0;
  double R = 1.0;
  int restarts = 4;
  int max_iters = 2000;
  double grad_tol = 1e-6;
  double tie_tol = 1e-6;
  double smoothing_mu = 1e-8;
  std::uint64_t seed = 0;
  bool record_history = false;

  void validate() const {
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidArgument("p must be in (0, inf)");
    if (!(R > 0.0)) throw InvalidArgument("R must be > 0");
    if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
    if (!(grad_tol > 0.0) || !(tie_tol > 0.0) || !(smoothing_mu > 0.0)) {
      throw InvalidArgument("grad_tol, tie_tol and smoothing_mu must be > 0");
    }
  }
};

struct TrainResult {
  Parametrization params;
  double objective = 0.0;
  /// Infinity norm of the projected gradient x - P(x - g) at the returned point.
  double grad_norm = 0.0;
  int restart_index = 0;
  int iterations = 0;
  bool converged = false;
  /// Objective after every accepted step (first entry = initial objective);
  /// filled only when TrainConfig::record_history is set.
  std::vector<double> history;
};

inline double empirical_risk(const Parametrization& params, const ClipSpec& spec,
                             const Dataset& data) {
  if (data.size() == 0) throw InvalidArgument("empirical_risk: empty dataset");
  if (data.dim != params.arch().input_dim()) {
    throw DimensionMismatch("empirical_risk: dataset dimension does not match network input");
  }
  ForwardBuffer buf(params.arch());
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = clip(buf.run(params, data.input(i)), spec.D) - data.labels[i];
    s += r * r;
  }
  return s / static_cast<double>(data.size());
}

/// Empirical risk + (lambda/2) |theta|_p^p.
inline double regularized_objective(const Parametrization& params, const ClipSpec& spec,
                                    const Dataset& data, double lambda, double p) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  const double risk = empirical_risk(params, spec, data);
  if (lambda == 0.0) return risk;
  return risk + 0.5 * lambda * lp_norm_p(params, p);
}

namespace detail {

/// d/dw of |w|^p. For p < 2 the smoothed surrogate (w^2 + mu^2)^(p/2) is
/// differentiated instead.
inline double penalty_derivative(double w, double p, double mu) {
  if (p < 2.0) return p * w * std::pow(w * w + mu * mu, 0.5 * p - 1.0);
  if (p == 2.0) return 2.0 * w;
  const double a = std::abs(w);
  return (w < 0.0 ? -1.0 : 1.0) * p * std::pow(a, p - 1.0);
}

}  // namespace detail

/// Per-architecture scratch space for batched gradient evaluation.
class GradientWorkspace {
 public:
  explicit GradientWorkspace(const Architecture& arch) : arch_(arch) {
    const std::size_t L = arch.depth();
    pre_.resize(L);
    act_.resize(L + 1);
    for (std::size_t l = 0; l <= L; ++l) act_[l].resize(arch.widths()[l]);
    for (std::size_t l = 0; l < L; ++l) pre_[l].resize(arch.fan_out(l));
    delta_.resize(arch.width());
    delta_prev_.resize(arch.width());
  }

  /// Gradient of the (smoothed) objective; returns the exact objective value.
  double value_and_gradient(const Parametrization& params, const ClipSpec& spec,
                            const Dataset& data, double lambda, double p, double mu,
                            std::span<double> grad) {
    const Architecture& arch = params.arch();
    const std::size_t L = arch.depth();
    const std::size_t n = data.size();
    if (n == 0) throw InvalidArgument("objective_gradient: empty dataset");
    if (data.dim != arch.input_dim()) {
      throw DimensionMismatch("objective_gradient: dataset dimension does not match network");
    }
    if (grad.size() != params.size()) throw DimensionMismatch("gradient buffer has wrong size");
    std::fill(grad.begin(), grad.end(), 0.0);
    const double* theta = params.values().data();
    const double inv_n = 1.0 / static_cast<double>(n);
    double risk = 0.0;

    for (std::size_t s = 0; s < n; ++s) {
      auto x = data.input(s);
      std::copy(x.begin(), x.end(), act_[0].begin());
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t fi = arch.fan_in(l);
        const std::size_t fo = arch.fan_out(l);
        const double* w = theta + arch.weight_offset(l);
        const double* b = theta + arch.bias_offset(l);
        for (std::size_t i = 0; i < fo; ++i) {
          double acc = b[i];
          for (std::size_t j = 0; j < fi; ++j) acc += w[i * fi + j] * act_[l][j];
          pre_[l][i] = acc;
          act_[l + 1][i] = (l + 1 < L) ? detail::relu(acc) : acc;
        }
      }
      const double out = pre_[L - 1][0];
      const double clipped = clip(out, spec.D);
      const double resid = clipped - data.labels[s];
      risk += resid * resid;
      // clip'(out) is 1 strictly inside (-D, D) and 0 elsewhere (0 at +-D).
      if (!(std::abs(out) < spec.D)) continue;
      delta_[0] = 2.0 * resid * inv_n;
      for (std::size_t l = L; l-- > 0;) {
        const std::size_t fi = arch.fan_in(l);
        const std::size_t fo = arch.fan_out(l);
        double* gw = grad.data() + arch.weight_offset(l);
        double* gb = grad.data() + arch.bias_offset(l);
        const double* w = theta + arch.weight_offset(l);
        for (std::size_t i = 0; i < fo; ++i) {
          const double di = delta_[i];
          if (di == 0.0) continue;
          gb[i] += di;
          for (std::size_t j = 0; j < fi; ++j) gw[i * fi + j] += di * act_[l][j];
        }
        if (l == 0) break;
        for (std::size_t j = 0; j < fi; ++j) {
          // relu'(0) = 0
          if (!(pre_[l - 1][j] > 0.0)) {
            delta_prev_[j] = 0.0;
            continue;
          }
          double acc = 0.0;
          for (std::size_t i = 0; i < fo; ++i) acc += w[i * fi + j] * delta_[i];
          delta_prev_[j] = acc;
        }
        std::swap(delta_, delta_prev_);
      }
    }
    double value = risk * inv_n;
    if (lambda > 0.0) {
      double pen = 0.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        const double w = theta[k];
        pen += std::pow(std::abs(w), p);
        grad[k] += 0.5 * lambda * detail::penalty_derivative(w, p, mu);
      }
      value += 0.5 * lambda * pen;
    }
    if (!std::isfinite(value)) throw NumericalError("objective is not finite");
    for (double g : grad) {
      if (!std::isfinite(g)) throw NumericalError("gradient has a non-finite entry");
    }
    return value;
  }

 private:
  Architecture arch_;
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> act_;
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
};

/// Gradient of the regularized objective, flat and laid out like the
/// parametrization. ReLU and clip subgradients at kinks are taken as 0.
inline std::vector<double> objective_gradient(const Parametrization& params, const ClipSpec& spec,
                                              const Dataset& data, double lambda, double p,
                                              double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("smoothing mu must be > 0");
  std::vector<double> g(params.size());
  GradientWorkspace ws(params.arch());
  ws.value_and_gradient(params, spec, data, lambda, p, mu, g);
  return g;
}

/// ReLU on/off flags for every hidden unit and sample, followed by the
/// clip region (-1, 0, +1) of every sample. Two parametrizations with equal
/// patterns lie in the same smooth piece of the empirical risk.
inline std::vector<std::int8_t> activation_pattern(const Parametrization& params,
                                                   const ClipSpec& spec, const Dataset& data) {
  const Architecture& arch = params.arch();
  std::vector<std::int8_t> pat;
  std::vector<double> a, b;
  for (std::size_t s = 0; s < data.size(); ++s) {
    auto x = data.input(s);
    a.assign(x.begin(), x.end());
    for (std::size_t l = 0; l < arch.depth(); ++l) {
      b.assign(arch.fan_out(l), 0.0);
      detail::affine(params, l, a, b, false);
      if (l + 1 < arch.depth()) {
        for (double& z : b) {
          pat.push_back(z > 0.0 ? 1 : 0);
          z = detail::relu(z);
        }
      } else {
        pat.push_back(b[0] >= spec.D ? 1 : (b[0] <= -spec.D ? -1 : 0));
      }
      a.swap(b);
    }
  }
  return pat;
}

/// Projected gradient descent on [-R, R]^P with Armijo backtracking
/// (c = 1e-4, step halving). Stops once the projected-gradient infinity norm
/// is <= grad_tol, after max_iters accepted steps, or when no step size
/// down to 1e-20 gives sufficient decrease.
inline TrainResult train_single(const Parametrization& init, const ClipSpec& spec,
                                const Dataset& data, const TrainConfig& cfg,
                                int restart_index = 0) {
  cfg.validate();
  constexpr double kArmijo = 1e-4;
  constexpr double kMinStep = 1e-20;
  constexpr double kMaxStep = 1e6;
  const double R = cfg.R;
  if (linf_norm(init) > R) throw InvalidArgument("train_single: init lies outside the box");

  const Architecture& arch = init.arch();
  GradientWorkspace ws(arch);
  Parametrization x(arch, std::vector<double>(init.values().begin(), init.values().end()), R);
  Parametrization trial = x;
  std::vector<double> g(x.size());

  auto projected_grad_norm = [&](const Parametrization& at) {
    double m = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double v = at.values()[k];
      m = std::max(m, std::abs(v - std::clamp(v - g[k], -R, R)));
    }
    return m;
  };

  double f = ws.value_and_gradient(x, spec, data, cfg.lambda, cfg.p, cfg.smoothing_mu, g);
  double pg = projected_grad_norm(x);
  TrainResult res;
  if (cfg.record_history) res.history.push_back(f);
  int iters = 0;
  double step = 0.5;
  while (pg > cfg.grad_tol && iters < cfg.max_iters) {
    double t = std::min(2.0 * step, kMaxStep);
    bool accepted = false;
    double f_trial = f;
    while (t >= kMinStep) {
      auto xv = x.values();
      auto tv = trial.values();
      double decrease = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        tv[k] = std::clamp(xv[k] - t * g[k], -R, R);
        decrease += g[k] * (tv[k] - xv[k]);
      }
      if (decrease < 0.0) {
        f_trial = regularized_objective(trial, spec, data, cfg.lambda, cfg.p);
        if (!std::isfinite(f_trial)) throw NumericalError("objective became non-finite");
        if (f_trial <= f + kArmijo * decrease) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) break;
    std::swap(x, trial);
    step = t;
    ++iters;
    f = ws.value_and_gradient(x, spec, data, cfg.lambda, cfg.p, cfg.smoothing_mu, g);
    pg = projected_grad_norm(x);
    if (cfg.record_history) res.history.push_back(f);
  }
  res.params = std::move(x);
  res.objective = f;
  res.grad_norm = pg;
  res.restart_index = restart_index;
  res.iterations = iters;
  res.converged = pg <= cfg.grad_tol;
  return res;
}

/// Seed of the `k`-th random restart.
inline std::uint64_t restart_seed(std::uint64_t seed, int k) {
  return split_seed(seed, static_cast<std::uint64_t>(k));
}

/// Approximate min-norm lambda-ERM solution. Every restart whose objective is
/// within best * (1 + tie_tol) + tie_tol counts as a minimizer; among those the
/// smallest |theta|_inf wins (ties: lower objective, then lower restart index).
/// When `log` is given it receives every finite restart result in order.
inline TrainResult solve_lambda_erm(const Architecture& arch, const ClipSpec& spec,
                                    const Dataset& data, const TrainConfig& cfg,
                                    std::vector<TrainResult>* log = nullptr) {
  cfg.validate();
  std::vector<TrainResult> results;
  results.reserve(static_cast<std::size_t>(cfg.restarts));
  std::string last_error;
  for (int k = 0; k < cfg.restarts; ++k) {
    try {
      results.push_back(
          train_single(random_init(arch, cfg.R, restart_seed(cfg.seed, k)), spec, data, cfg, k));
    } catch (const NumericalError& e) {
      last_error = e.what();
    }
  }
  if (results.empty()) {
    throw NumericalError("every restart produced a non-finite objective: " + last_error);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : results) best = std::min(best, r.objective);
  const double threshold = best * (1.0 + cfg.tie_tol) + cfg.tie_tol;
  const TrainResult* pick = nullptr;
  double pick_norm = 0.0;
  for (const auto& r : results) {
    if (r.objective > threshold) continue;
    const double nrm = linf_norm(r.params);
    if (pick == nullptr || nrm < pick_norm ||
        (nrm == pick_norm && r.objective < pick->objective)) {
      pick = &r;
      pick_norm = nrm;
    }
  }
  TrainResult out = *pick;
  if (log != nullptr) *log = std::move(results);
  return out;
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  if (j.contains("p")) c.p = j.at("p").get<double>();
  if (j.contains("R")) c.R = j.at("R").get<double>();
  if (j.contains("restarts")) c.restarts = j.at("restarts").get<int>();
  if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
  if (j.contains("grad_tol")) c.grad_tol = j.at("grad_tol").get<double>();
  if (j.contains("tie_tol")) c.tie_tol = j.at("tie_tol").get<double>();
  if (j.contains("smoothing_mu")) c.smoothing_mu = j.at("smoothing_mu").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lambda", c.lambda},     {"p", c.p},
       {"R", c.R},               {"restarts", c.restarts},
       {"max_iters", c.max_iters}, {"grad_tol", c.grad_tol},
       {"tie_tol", c.tie_tol},   {"smoothing_mu", c.smoothing_mu},
       {"seed", c.seed}};
}

inline nlohmann::json to_json(const TrainResult& r, const ClipSpec& clip = ClipSpec{}) {
  return {{"objective", r.objective},
          {"grad_norm", r.grad_norm},
          {"iterations", r.iterations},
          {"restart_index", r.restart_index},
          {"converged", r.converged},
          {"params", to_json(r.params, clip)}};
}

}  // namespace mrl
