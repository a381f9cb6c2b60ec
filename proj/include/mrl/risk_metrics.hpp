// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// Monte-Carlo estimators for misclassification and excess risk, L2 distance
// to eta, margin diagnostics, and the proof-lemma inequalities as checkable
// statistics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrl/distributions.hpp"
#include "mrl/error.hpp"
#include "mrl/relu_net.hpp"
#include "mrl/rng.hpp"
#include "mrl/stats.hpp"

namespace mrl {

using Classifier = std::function<int(std::span<const double>)>;
using RealFunction = std::function<double(std::span<const double>)>;

/// sign o f as a classifier.
inline Classifier sign_classifier(RealFunction f) {
  return [f = std::move(f)](std::span<const double> x) { return sign_of(f(x)); };
}

inline Classifier bayes_classifier(const SyntheticDistribution& dist) {
  return [&dist](std::span<const double> x) { return sign_of(dist.eta(x)); };
}

inline RealFunction eta_function(const SyntheticDistribution& dist) {
  return [&dist](std::span<const double> x) { return dist.eta(x); };
}

/// sign o clip_D o f(.; theta), with a private forward buffer.
inline Classifier network_classifier(const Parametrization& params, const ClipSpec& spec) {
  auto buf = std::make_shared<ForwardBuffer>(params.arch());
  return [params, spec, buf](std::span<const double> x) {
    return sign_of(clip(buf->run(params, x), spec.D));
  };
}

struct RiskEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
};

/// Paired difference estimate; value may be slightly negative.
struct ExcessEstimate {
  double value = 0.0;
  double std_error = 0.0;
  /// Fraction of the same draws the Bayes classifier gets wrong.
  double bayes_risk = 0.0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void require_m(std::size_t m, std::size_t min_m) {
  if (m < min_m) throw InvalidArgument("need at least " + std::to_string(min_m) + " Monte-Carlo samples");
}

}  // namespace detail

/// Fraction of m fresh draws with classifier(x) != y. A 0 prediction is always wrong.
inline RiskEstimate misclass_risk(const Classifier& classifier, const SyntheticDistribution& dist,
                                  std::size_t m, std::uint64_t seed) {
  detail::require_m(m, 100);
  Rng rng(seed);
  std::vector<double> x(dist.dim());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = dist.draw(rng, x);
    if (classifier(x) != y) ++wrong;
  }
  const double v = static_cast<double>(wrong) / static_cast<double>(m);
  return {v, std::sqrt(v * (1.0 - v) / static_cast<double>(m)), m, seed};
}

/// Common-random-numbers excess risk: mean over the same m draws of
/// 1{classifier wrong} - 1{Bayes wrong}.
inline ExcessEstimate excess_risk(const Classifier& classifier, const SyntheticDistribution& dist,
                                  std::size_t m, std::uint64_t seed) {
  detail::require_m(m, 100);
  Rng rng(seed);
  std::vector<double> x(dist.dim());
  long long sum = 0;
  long long sum_abs = 0;  // d_i in {-1,0,1}, so d_i^2 = |d_i|
  std::size_t bayes_wrong = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = dist.draw(rng, x);
    const int c = classifier(x);
    const int b = sign_of(dist.eta(x));
    const int d = (c != y ? 1 : 0) - (b != y ? 1 : 0);
    sum += d;
    sum_abs += d != 0 ? 1 : 0;
    if (b != y) ++bayes_wrong;
  }
  const double md = static_cast<double>(m);
  const double mu = static_cast<double>(sum) / md;
  const double var = std::max(0.0, static_cast<double>(sum_abs) / md - mu * mu);
  return {mu, std::sqrt(var / md), static_cast<double>(bayes_wrong) / md, m, seed};
}

struct L2Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// sqrt(E[(f(X) - eta(X))^2]) with a delta-method standard error.
inline L2Estimate l2_distance(const RealFunction& f, const SyntheticDistribution& dist,
                              std::size_t m, std::uint64_t seed) {
  detail::require_m(m, 100);
  Rng rng(seed);
  std::vector<double> x(dist.dim());
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    dist.marginal().draw(rng, x);
    const double r = f(x) - dist.eta(x);
    const double q = r * r;
    s += q;
    s2 += q * q;
  }
  const double md = static_cast<double>(m);
  const double msq = s / md;
  const double se_msq = std::sqrt(std::max(0.0, s2 / md - msq * msq) / md);
  const double v = std::sqrt(msq);
  return {v, v > 0.0 ? se_msq / (2.0 * v) : std::sqrt(se_msq)};
}

struct MarginCurve {
  std::vector<double> thresholds;
  std::vector<double> probs;
  std::vector<double> stderrs;
  std::size_t m = 0;
};

/// Empirical P(|eta(X)| <= t) for each t, all thresholds on one shared sample.
inline MarginCurve margin_curve(const SyntheticDistribution& dist, std::span<const double> thresholds,
                                std::size_t m, std::uint64_t seed) {
  detail::require_m(m, 1);
  if (thresholds.empty()) throw InvalidArgument("margin_curve needs at least one threshold");
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (!(thresholds[k] > 0.0 && thresholds[k] <= 1.0)) {
      throw InvalidArgument("margin thresholds must lie in (0, 1]");
    }
    if (k > 0 && !(thresholds[k] > thresholds[k - 1])) {
      throw InvalidArgument("margin thresholds must be strictly increasing");
    }
  }
  Rng rng(seed);
  std::vector<double> x(dist.dim());
  std::vector<double> a(m);
  for (auto& v : a) {
    dist.marginal().draw(rng, x);
    v = std::abs(dist.eta(x));
  }
  std::sort(a.begin(), a.end());
  MarginCurve c;
  c.m = m;
  c.thresholds.assign(thresholds.begin(), thresholds.end());
  const double md = static_cast<double>(m);
  for (double t : thresholds) {
    const auto cnt = std::upper_bound(a.begin(), a.end(), t) - a.begin();
    const double p = static_cast<double>(cnt) / md;
    c.probs.push_back(p);
    c.stderrs.push_back(std::sqrt(p * (1.0 - p) / md));
  }
  return c;
}

struct NoiseExponentFit {
  /// False when fewer than 3 thresholds have a probability strictly in (0,1):
  /// the curve looks hard-margin-like and the exponent is undefined.
  bool defined = false;
  double q = 0.0;
  double C = 0.0;
  double stderr_q = 0.0;
  std::size_t usable_points = 0;
};

/// Least squares log p = log C + q log t over thresholds with 0 < p < 1.
inline NoiseExponentFit fit_noise_exponent(const MarginCurve& curve) {
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    const double p = curve.probs[k];
    if (p > 0.0 && p < 1.0) {
      lx.push_back(std::log(curve.thresholds[k]));
      ly.push_back(std::log(p));
    }
  }
  NoiseExponentFit out;
  out.usable_points = lx.size();
  if (lx.size() < 3) return out;
  const LinearFit f = linear_fit(lx, ly);
  out.defined = true;
  out.q = f.slope;
  out.C = std::exp(f.intercept);
  out.stderr_q = f.slope_stderr;
  return out;
}

/// Number of m draws with |eta(X)| <= delta.
inline std::size_t check_hard_margin(const SyntheticDistribution& dist, double delta, std::size_t m,
                                     std::uint64_t seed) {
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in (0, 1]");
  Rng rng(seed);
  std::vector<double> x(dist.dim());
  std::size_t violations = 0;
  for (std::size_t i = 0; i < m; ++i) {
    dist.marginal().draw(rng, x);
    if (std::abs(dist.eta(x)) <= delta) ++violations;
  }
  return violations;
}

struct InequalityCheck {
  std::string name;
  bool applicable = false;
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs = 0.0;
  double rhs_stderr = 0.0;
  /// lhs exceeds rhs by more than 3 combined standard errors.
  bool violated = false;
  std::string note;
};

struct LemmaReport {
  InequalityCheck sign_difference;   // |R(sign f) - R(sign g)| <= P(||f - g||_inf >= |f(X)|)
  InequalityCheck excess_vs_l2;      // R(sign f) - R(sign eta) <= ||f - eta||_L2
  InequalityCheck margin_transfer;   // P(|f(X)| <= nu) <= eps^2 / (delta - nu)^2
  double sup_norm_surrogate = 0.0;
  std::size_t m = 0;
  std::uint64_t seed = 0;

  bool any_violation() const {
    return sign_difference.violated || excess_vs_l2.violated || margin_transfer.violated;
  }
};

namespace detail {

inline void finish_check(InequalityCheck& c) {
  c.violated = c.applicable &&
               c.lhs - c.rhs > 3.0 * std::sqrt(c.lhs_stderr * c.lhs_stderr + c.rhs_stderr * c.rhs_stderr);
}

}  // namespace detail

/// Estimates both sides of the three proof-lemma inequalities on m draws.
///
/// The sup-norm ||f - g||_inf is replaced by the maximum of |f - g| over the
/// sup_norm_grid points and the m sampled inputs. The margin-transfer check
/// runs only when the distribution has a known hard margin delta and the
/// estimated eps = ||f - eta||_L2 is below it; nu defaults to delta / 2.
inline LemmaReport lemma_inequality_report(const RealFunction& f, const RealFunction& g,
                                           const SyntheticDistribution& dist, std::size_t m,
                                           std::uint64_t seed, std::optional<double> nu = std::nullopt) {
  detail::require_m(m, 100);
  Rng rng(seed);
  const std::size_t d = dist.dim();
  std::vector<double> x(d);
  std::vector<double> abs_f(m);
  std::vector<int> diff_fg(m);
  std::vector<int> diff_feta(m);
  double sup = 0.0;
  double sq = 0.0;
  double sq2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = dist.draw(rng, x);
    const double fv = f(x);
    const double gv = g(x);
    const double ev = dist.eta(x);
    const int wf = sign_of(fv) != y ? 1 : 0;
    const int wg = sign_of(gv) != y ? 1 : 0;
    const int we = sign_of(ev) != y ? 1 : 0;
    abs_f[i] = std::abs(fv);
    diff_fg[i] = wf - wg;
    diff_feta[i] = wf - we;
    sup = std::max(sup, std::abs(fv - gv));
    const double r2 = (fv - ev) * (fv - ev);
    sq += r2;
    sq2 += r2 * r2;
  }
  for (const auto& p : sup_norm_grid(d)) sup = std::max(sup, std::abs(f(p) - g(p)));

  const double md = static_cast<double>(m);
  auto paired = [&](const std::vector<int>& dv) {
    double s = 0.0;
    double s2 = 0.0;
    for (int v : dv) {
      s += v;
      s2 += v * v;
    }
    const double mu = s / md;
    return std::pair<double, double>(mu, std::sqrt(std::max(0.0, s2 / md - mu * mu) / md));
  };
  auto proportion = [&](std::size_t count) {
    const double p = static_cast<double>(count) / md;
    return std::pair<double, double>(p, std::sqrt(p * (1.0 - p) / md));
  };

  LemmaReport rep;
  rep.m = m;
  rep.seed = seed;
  rep.sup_norm_surrogate = sup;

  {
    auto& c = rep.sign_difference;
    c.name = "sign_difference";
    c.applicable = true;
    auto [mu, se] = paired(diff_fg);
    c.lhs = std::abs(mu);
    c.lhs_stderr = se;
    const auto cnt = static_cast<std::size_t>(
        std::count_if(abs_f.begin(), abs_f.end(), [&](double a) { return sup >= a; }));
    std::tie(c.rhs, c.rhs_stderr) = proportion(cnt);
    c.note = "sup-norm surrogate: max |f-g| over grid and sampled inputs";
    detail::finish_check(c);
  }

  const double msq = sq / md;
  const double eps = std::sqrt(msq);
  const double se_msq = std::sqrt(std::max(0.0, sq2 / md - msq * msq) / md);
  const double eps_se = eps > 0.0 ? se_msq / (2.0 * eps) : std::sqrt(se_msq);
  {
    auto& c = rep.excess_vs_l2;
    c.name = "excess_vs_l2";
    c.applicable = true;
    std::tie(c.lhs, c.lhs_stderr) = paired(diff_feta);
    c.rhs = eps;
    c.rhs_stderr = eps_se;
    detail::finish_check(c);
  }
  {
    auto& c = rep.margin_transfer;
    c.name = "margin_transfer";
    const auto delta = dist.hard_margin();
    if (!delta) {
      c.note = "distribution has no known hard margin";
    } else if (!(eps < *delta)) {
      c.note = "estimated ||f-eta||_L2 is not below the margin";
    } else {
      const double n_ = nu.value_or(*delta / 2.0);
      if (!(n_ > 0.0 && n_ < *delta)) throw InvalidArgument("nu must lie in (0, delta)");
      c.applicable = true;
      const auto cnt = static_cast<std::size_t>(
          std::count_if(abs_f.begin(), abs_f.end(), [&](double a) { return a <= n_; }));
      std::tie(c.lhs, c.lhs_stderr) = proportion(cnt);
      const double gap2 = (*delta - n_) * (*delta - n_);
      c.rhs = eps * eps / gap2;
      c.rhs_stderr = 2.0 * eps * eps_se / gap2;
      c.note = "nu = " + format_double(n_) + ", delta = " + format_double(*delta);
    }
    detail::finish_check(c);
  }
  return rep;
}

inline nlohmann::json to_json(const InequalityCheck& c) {
  return {{"name", c.name},          {"applicable", c.applicable}, {"lhs", c.lhs},
          {"lhs_stderr", c.lhs_stderr}, {"rhs", c.rhs},            {"rhs_stderr", c.rhs_stderr},
          {"violated", c.violated},  {"note", c.note}};
}

inline nlohmann::json to_json(const LemmaReport& r) {
  return {{"sign_difference", to_json(r.sign_difference)},
          {"excess_vs_l2", to_json(r.excess_vs_l2)},
          {"margin_transfer", to_json(r.margin_transfer)},
          {"sup_norm_surrogate", r.sup_norm_surrogate},
          {"m", r.m},
          {"seed", r.seed}};
}

inline nlohmann::json to_json(const MarginCurve& c) {
  return {{"thresholds", c.thresholds}, {"probs", c.probs}, {"stderrs", c.stderrs}, {"m", c.m}};
}

inline nlohmann::json to_json(const NoiseExponentFit& f) {
  if (!f.defined) {
    return {{"defined", false},
            {"usable_points", f.usable_points},
            {"outcome", "hard-margin-like, exponent undefined"}};
  }
  return {{"defined", true}, {"q", f.q}, {"C", f.C}, {"stderr", f.stderr_q},
          {"usable_points", f.usable_points}};
}

inline std::string margin_curve_csv(const MarginCurve& c) {
  std::string s = "t,prob,stderr\n";
  for (std::size_t k = 0; k < c.thresholds.size(); ++k) {
    s += format_double(c.thresholds[k]) + "," + format_double(c.probs[k]) + "," +
         format_double(c.stderrs[k]) + "\n";
  }
  return s;
}

}  // namespace mrl
