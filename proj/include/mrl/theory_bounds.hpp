// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// Closed-form complexity measures and excess-risk bounds for clipped ReLU
// network classifiers. Anything that can leave double range is carried as a
// natural logarithm; linear values are reported next to a flag instead of
// silently becoming infinity.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrl/error.hpp"
#include "mrl/relu_net.hpp"

namespace mrl {

/// A nonnegative quantity held as its natural log (log = -inf for zero).
struct LogValue {
  double log = -std::numeric_limits<double>::infinity();

  static LogValue zero() { return {}; }
  static LogValue from_linear(double v) {
    if (v < 0.0) throw InvalidArgument("LogValue holds nonnegative quantities only");
    return {std::log(v)};
  }

  bool overflows() const { return log > std::log(std::numeric_limits<double>::max()); }
  double value() const { return std::exp(log); }
};

/// log(e^a + e^b), exact for infinite arguments.
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// log(1 + e^a) without overflow.
inline double log1p_exp(double a) { return a > 35.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

inline nlohmann::json to_json(const LogValue& v) {
  nlohmann::json j;
  j["log"] = std::isinf(v.log) ? nlohmann::json(v.log > 0 ? "inf" : "-inf") : nlohmann::json(v.log);
  j["value"] = v.overflows() ? nlohmann::json(nullptr) : nlohmann::json(v.value());
  j["overflow"] = v.overflows();
  return j;
}

/// log of 2 L^2 R^(L-1) W^L.
inline double log_lipschitz_bound(const Architecture& arch, double R) {
  if (!(R > 0.0)) throw InvalidArgument("lipschitz_bound requires R > 0");
  const double L = static_cast<double>(arch.depth());
  const double W = static_cast<double>(arch.width());
  return std::numbers::ln2 + 2.0 * std::log(L) + (L - 1.0) * std::log(R) + L * std::log(W);
}

/// Upper bound 2 L^2 R^(L-1) W^L on the Lipschitz constant of theta -> f(.; theta)
/// from (P_{a,R}, |.|_inf) to (C([0,1]^d), sup). L and W exclude the clip layers.
inline double lipschitz_bound(const Architecture& arch, double R) {
  return std::exp(log_lipschitz_bound(arch, R));
}

struct CoveringBound {
  LogValue bound;
  double log_ratio = 0.0;  // log(2 R Lip / eps)
};

/// (1 + 2 R Lip / eps)^P given log Lip and log eps.
inline CoveringBound covering_bound_log(std::size_t P, double R, double log_lip, double log_eps) {
  CoveringBound c;
  c.log_ratio = std::numbers::ln2 + std::log(R) + log_lip - log_eps;
  c.bound.log = static_cast<double>(P) * log1p_exp(c.log_ratio);
  return c;
}

/// Sup-norm covering number bound (1 + 2 R Lip / eps)^{P(a)}.
inline CoveringBound covering_bound(const Architecture& arch, double R, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("covering_bound requires eps > 0");
  return covering_bound_log(arch.param_count(), R, log_lipschitz_bound(arch, R), std::log(eps));
}

enum class Regime { kLowNoise, kHardMargin };

inline std::string to_string(Regime r) { return r == Regime::kLowNoise ? "low-noise" : "hard-margin"; }

inline Regime regime_from_string(const std::string& s) {
  if (s == "low-noise") return Regime::kLowNoise;
  if (s == "hard-margin") return Regime::kHardMargin;
  throw InvalidArgument("regime must be \"low-noise\" or \"hard-margin\", got \"" + s + "\"");
}

struct BoundInputs {
  Architecture arch;
  double R = 1.0;
  double eps_approx = 0.0;
  double lambda = 0.0;
  double p = 2.0;
  double K = 1.0;
  double r = 2.0;
  double delta = 0.5;
  double nu = 0.25;
  double q = 1.0;  // low-noise only
  double C = 1.0;  // low-noise only
  double n = 1.0;
};

/// A violated bound precondition; the message names the inequality.
class BoundPreconditionError : public InvalidArgument {
 public:
  explicit BoundPreconditionError(const std::string& msg) : InvalidArgument(msg) {}
};

struct BoundReport {
  Regime regime = Regime::kHardMargin;
  LogValue approximation;   // eps + sqrt(2^(1-p) lambda P R^p)
  LogValue noise;           // C delta^q, zero in the hard-margin regime
  LogValue margin_ratio;    // (delta - nu)^-2 (approximation)^2
  LogValue statistical;     // 4 Cov(eps_cov) exp(exponent)
  LogValue total;
  double log_lipschitz = 0.0;
  double log_covering_radius = 0.0;
  LogValue covering;
  double exponent = 0.0;
  double lambda_ceiling = 0.0;
};

/// Term-by-term evaluation of the generic excess-risk bound.
inline BoundReport generic_bound(const BoundInputs& in, Regime regime) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw BoundPreconditionError("precondition violated: " + what);
  };
  require(in.R > 0.0, "R > 0");
  require(in.p > 0.0, "p > 0");
  require(in.K > 0.0, "K > 0");
  require(in.r > 1.0, "r > 1");
  require(in.n >= 1.0, "n >= 1");
  require(in.eps_approx >= 0.0, "eps_approx >= 0");
  require(in.lambda >= 0.0, "lambda >= 0");
  require(in.nu > 0.0, "0 < nu");
  require(in.nu < in.delta, "nu < delta");
  require(in.delta > in.eps_approx, "delta > eps_approx");
  if (regime == Regime::kLowNoise) {
    require(in.q > 0.0, "q > 0");
    require(in.C > 0.0, "C > 0");
  }
  const double P = static_cast<double>(in.arch.param_count());
  const double gap = in.delta - in.eps_approx;
  const double ceiling = std::pow(2.0, in.p - 1.0) * gap * gap / (P * std::pow(in.R, in.p));
  require(in.lambda < ceiling,
          "lambda < 2^(p-1) (delta - eps_approx)^2 / (P(a) R^p) = " + std::to_string(ceiling));

  BoundReport rep;
  rep.regime = regime;
  rep.lambda_ceiling = ceiling;
  const double approx =
      in.eps_approx + std::sqrt(std::pow(2.0, 1.0 - in.p) * in.lambda * P * std::pow(in.R, in.p));
  rep.approximation = LogValue::from_linear(approx);
  rep.noise = regime == Regime::kLowNoise ? LogValue::from_linear(in.C * std::pow(in.delta, in.q))
                                          : LogValue::zero();
  rep.margin_ratio.log = 2.0 * std::log(approx) - 2.0 * std::log(in.delta - in.nu);

  const double L = static_cast<double>(in.arch.depth());
  rep.log_lipschitz = log_lipschitz_bound(in.arch, in.R);
  const double log_scaled_nu = std::log(in.nu) + (1.0 - L) * std::numbers::ln2;  // log(2^(1-L) nu)
  rep.log_covering_radius =
      std::log(in.K) + in.r * log_scaled_nu - std::log(24.0) - (1.0 + in.r) * rep.log_lipschitz;
  rep.covering =
      covering_bound_log(in.arch.param_count(), in.R, rep.log_lipschitz, rep.log_covering_radius).bound;
  rep.exponent = -in.n * std::exp(2.0 * std::log(in.K) + 2.0 * in.r * log_scaled_nu -
                                  std::log(288.0) - 2.0 * in.r * rep.log_lipschitz);
  rep.statistical.log = std::log(4.0) + rep.covering.log + rep.exponent;

  double t = rep.approximation.log;
  t = log_add_exp(t, rep.noise.log);
  t = log_add_exp(t, rep.margin_ratio.log);
  t = log_add_exp(t, rep.statistical.log);
  rep.total.log = t;
  return rep;
}

enum class ApproxVariant { kA5, kLu };

struct ApproxConstants {
  double C1 = 0.0;
  double C2 = 0.0;
  double C3 = 0.0;
};

/// Width, depth and error constants of the smooth-function approximation rates.
///   A5: C1 = (3s)^d d,          C2 = sqrt(s),  C3 = s^d 8^s ||eta||_{C^s}
///   Lu: C1 = 17 s^(d+1) 3^d d,  C2 = 18 s^2,   C3 = 85 (s+1)^d 8^s
inline ApproxConstants approx_constants(double s, std::size_t d, double eta_cs_norm,
                                        ApproxVariant variant) {
  if (!(s > 0.0)) throw InvalidArgument("smoothness s must be > 0");
  if (d < 1) throw InvalidArgument("d must be >= 1");
  const double dd = static_cast<double>(d);
  if (variant == ApproxVariant::kA5) {
    return {std::pow(3.0 * s, dd) * dd, std::sqrt(s), std::pow(s, dd) * std::pow(8.0, s) * eta_cs_norm};
  }
  return {17.0 * std::pow(s, dd + 1.0) * std::pow(3.0, dd) * dd, 18.0 * s * s,
          85.0 * std::pow(s + 1.0, dd) * std::pow(8.0, s)};
}

struct SizingInputs {
  double alpha = 0.1;
  double s = 1.0;
  std::size_t d = 1;
  double p = 2.0;
  int L0 = 2;
  double r = 2.0;
  double R_star = 1.0;
  double eta_cs_norm = 1.0;
};

/// Architecture sizing for a target rate n^(-alpha) under the A5 constants.
class Sizing {
 public:
  explicit Sizing(const SizingInputs& in) : in_(in) {
    if (in.L0 < 2) throw InvalidArgument("L0 must be >= 2");
    if (!(in.alpha > 0.0) || !(in.s > 0.0) || !(in.p > 0.0) || !(in.R_star > 0.0) ||
        !(in.eta_cs_norm > 0.0) || in.d < 1) {
      throw InvalidArgument("sizing inputs alpha, s, p, R_star, eta_cs_norm must be > 0 and d >= 1");
    }
    if (!(in.r > 1.0)) throw InvalidArgument("r must be > 1");
    c_ = approx_constants(in.s, in.d, in.eta_cs_norm, ApproxVariant::kA5);
    const double L0 = in.L0;
    depth_raw_ = c_.C2 * L0 * std::log2(L0) + 2.0 * static_cast<double>(in.d);
    const double bracket =
        (std::sqrt(in.s) * L0 * std::log2(L0) + 2.0 * static_cast<double>(in.d)) * (2.0 + 2.0 * in.p) +
        in.p - 2.0;
    const double dp = static_cast<double>(in.d) / in.p;
    alpha_max_low_noise_ = 1.0 / (1.0 + dp / in.s * bracket);
    alpha_max_hard_margin_ = in.s * in.p / (static_cast<double>(in.d) * bracket);
  }

  const SizingInputs& inputs() const { return in_; }
  const ApproxConstants& constants() const { return c_; }

  /// L_n = ceil(C2 L0 log2 L0 + 2d); independent of n.
  double depth() const { return std::ceil(depth_raw_); }

  /// W_0(n) = L0^-1 (n^(-alpha/r) / C3)^(-d/(2s)), floored at 2.
  double base_width(double n) const {
    const double e = -static_cast<double>(in_.d) / (2.0 * in_.s);
    const double w0 = std::pow(std::pow(n, -in_.alpha / in_.r) / c_.C3, e) / in_.L0;
    return std::max(2.0, w0);
  }

  /// W_n = ceil(C1 W_0 log2 W_0).
  double width(double n) const {
    const double w0 = base_width(n);
    return std::ceil(c_.C1 * w0 * std::log2(w0));
  }

  /// L_n (W_n^2 + W_n), the parameter-count bound.
  double param_bound(double n) const {
    const double w = width(n);
    return depth() * (w * w + w);
  }

  /// R_n = R* (L_n (W_n^2 + W_n))^(1/p).
  double parameter_bound(double n) const { return in_.R_star * std::pow(param_bound(n), 1.0 / in_.p); }

  /// 2^(p-1) n^(-2 alpha / r) / ((R*)^p (L_n (W_n^2 + W_n))^2).
  double lambda_max(double n) const {
    const double P = param_bound(n);
    return std::pow(2.0, in_.p - 1.0) * std::pow(n, -2.0 * in_.alpha / in_.r) /
           (std::pow(in_.R_star, in_.p) * P * P);
  }

  double alpha_max_low_noise() const { return alpha_max_low_noise_; }
  double alpha_max_hard_margin() const { return alpha_max_hard_margin_; }
  bool alpha_admissible(Regime regime) const {
    return in_.alpha < (regime == Regime::kLowNoise ? alpha_max_low_noise_ : alpha_max_hard_margin_);
  }

 private:
  SizingInputs in_;
  ApproxConstants c_;
  double depth_raw_ = 0.0;
  double alpha_max_low_noise_ = 0.0;
  double alpha_max_hard_margin_ = 0.0;
};

inline Sizing sizing_for_rate(const SizingInputs& in) { return Sizing(in); }

struct IdealBound {
  double beta1 = 0.0;
  LogValue beta2;
  double log_lambda_max = 0.0;
  LogValue total;
};

/// Exponential bound for a well-specified student:
///   beta1 = K^2 (2^-L delta)^(2r) / (288 Lip^(2r))
///   beta2 = 1 + 4 Cov(K (2^-L delta)^r / (24 Lip^(1+r)))
///   lambda <= 2^(p-1) / (P R^p) exp(-2 n beta1)
///   total  = beta2 exp(-n beta1) + (4 / delta^2) exp(-2 n beta1)
inline IdealBound ideal_bound(const Architecture& arch, double R, double delta, double K, double r,
                              double p, double n) {
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in (0, 1]");
  if (!(r > 1.0)) throw InvalidArgument("r must be > 1");
  if (!(K > 0.0) || !(p > 0.0) || !(R > 0.0)) throw InvalidArgument("K, p, R must be > 0");
  if (!(n >= 1.0)) throw InvalidArgument("n must be >= 1");
  const double L = static_cast<double>(arch.depth());
  const double log_lip = log_lipschitz_bound(arch, R);
  const double log_scaled = std::log(delta) - L * std::numbers::ln2;  // log(2^-L delta)
  IdealBound out;
  out.beta1 = std::exp(2.0 * std::log(K) + 2.0 * r * log_scaled - std::log(288.0) - 2.0 * r * log_lip);
  const double log_eps = std::log(K) + r * log_scaled - std::log(24.0) - (1.0 + r) * log_lip;
  const LogValue cov = covering_bound_log(arch.param_count(), R, log_lip, log_eps).bound;
  out.beta2.log = log1p_exp(std::log(4.0) + cov.log);
  out.log_lambda_max = (p - 1.0) * std::numbers::ln2 - std::log(static_cast<double>(arch.param_count())) -
                       p * std::log(R) - 2.0 * n * out.beta1;
  out.total.log = log_add_exp(out.beta2.log - n * out.beta1,
                              std::log(4.0) - 2.0 * std::log(delta) - 2.0 * n * out.beta1);
  return out;
}

// ---- JSON ----------------------------------------------------------------

inline BoundInputs bound_inputs_from_json(const nlohmann::json& j) {
  BoundInputs b;
  b.arch = Architecture(j.at("widths").get<std::vector<std::size_t>>());
  b.R = j.value("R", b.R);
  b.eps_approx = j.value("eps_approx", b.eps_approx);
  b.lambda = j.value("lambda", b.lambda);
  b.p = j.value("p", b.p);
  b.K = j.value("K", b.K);
  b.r = j.value("r", b.r);
  b.delta = j.value("delta", b.delta);
  b.nu = j.value("nu", b.delta / 2.0);
  b.q = j.value("q", b.q);
  b.C = j.value("C", b.C);
  b.n = j.value("n", b.n);
  return b;
}

inline nlohmann::json to_json(const BoundInputs& b) {
  return {{"widths", b.arch.widths()}, {"R", b.R}, {"eps_approx", b.eps_approx},
          {"lambda", b.lambda},        {"p", b.p}, {"K", b.K},
          {"r", b.r},                  {"delta", b.delta}, {"nu", b.nu},
          {"q", b.q},                  {"C", b.C}, {"n", b.n}};
}

inline nlohmann::json to_json(const BoundReport& r) {
  return {{"regime", to_string(r.regime)},
          {"terms",
           {{"approximation", to_json(r.approximation)},
            {"noise", to_json(r.noise)},
            {"margin_ratio", to_json(r.margin_ratio)},
            {"statistical", to_json(r.statistical)}}},
          {"total", to_json(r.total)},
          {"log_lipschitz", r.log_lipschitz},
          {"log_covering_radius", r.log_covering_radius},
          {"covering", to_json(r.covering)},
          {"exponent", r.exponent},
          {"lambda_ceiling", r.lambda_ceiling}};
}

inline nlohmann::json to_json(const IdealBound& b) {
  return {{"beta1", b.beta1},
          {"beta2", to_json(b.beta2)},
          {"lambda_max", to_json(LogValue{b.log_lambda_max})},
          {"total", to_json(b.total)}};
}

inline SizingInputs sizing_inputs_from_json(const nlohmann::json& j) {
  SizingInputs s;
  s.alpha = j.value("alpha", s.alpha);
  s.s = j.value("s", s.s);
  s.d = j.value("d", s.d);
  s.p = j.value("p", s.p);
  s.L0 = j.value("L0", s.L0);
  s.r = j.value("r", s.r);
  s.R_star = j.value("R_star", s.R_star);
  s.eta_cs_norm = j.value("eta_cs_norm", s.eta_cs_norm);
  return s;
}

inline nlohmann::json sizing_report(const Sizing& sz, const std::vector<double>& ns) {
  nlohmann::json rows = nlohmann::json::array();
  for (double n : ns) {
    rows.push_back({{"n", n},
                    {"W_n", sz.width(n)},
                    {"L_n", sz.depth()},
                    {"R_n", sz.parameter_bound(n)},
                    {"lambda_max", sz.lambda_max(n)}});
  }
  const auto& c = sz.constants();
  nlohmann::json j = {{"C1", c.C1},
                      {"C2", c.C2},
                      {"C3", c.C3},
                      {"L_n", sz.depth()},
                      {"alpha", sz.inputs().alpha},
                      {"alpha_max_low_noise", sz.alpha_max_low_noise()},
                      {"alpha_max_hard_margin", sz.alpha_max_hard_margin()},
                      {"alpha_admissible_low_noise", sz.alpha_admissible(Regime::kLowNoise)},
                      {"alpha_admissible_hard_margin", sz.alpha_admissible(Regime::kHardMargin)},
                      {"per_n", rows}};
  nlohmann::json warnings = nlohmann::json::array();
  if (!sz.alpha_admissible(Regime::kLowNoise)) warnings.push_back("alpha exceeds the low-noise ceiling");
  if (!sz.alpha_admissible(Regime::kHardMargin)) warnings.push_back("alpha exceeds the hard-margin ceiling");
  j["warnings"] = warnings;
  return j;
}

/// Evaluates every section present in a bounds request document:
/// "lipschitz" {widths, R}, "covering" {widths, R, eps}, "generic" (BoundInputs
/// plus "regime"), "ideal" {widths, R, delta, K, r, p, n}, "sizing" (SizingInputs
/// plus optional "n" list).
inline nlohmann::json evaluate_bounds(const nlohmann::json& req) {
  nlohmann::json out = nlohmann::json::object();
  if (req.contains("lipschitz")) {
    const auto& j = req.at("lipschitz");
    Architecture a(j.at("widths").get<std::vector<std::size_t>>());
    const double R = j.value("R", 1.0);
    out["lipschitz"] = to_json(LogValue{log_lipschitz_bound(a, R)});
  }
  if (req.contains("covering")) {
    const auto& j = req.at("covering");
    Architecture a(j.at("widths").get<std::vector<std::size_t>>());
    out["covering"] = to_json(covering_bound(a, j.value("R", 1.0), j.at("eps").get<double>()).bound);
  }
  if (req.contains("generic")) {
    const auto& j = req.at("generic");
    out["generic"] = to_json(generic_bound(bound_inputs_from_json(j),
                                           regime_from_string(j.value("regime", "hard-margin"))));
  }
  if (req.contains("ideal")) {
    const auto& j = req.at("ideal");
    Architecture a(j.at("widths").get<std::vector<std::size_t>>());
    out["ideal"] = to_json(ideal_bound(a, j.value("R", 1.0), j.at("delta").get<double>(),
                                       j.value("K", 1.0), j.value("r", 2.0), j.value("p", 2.0),
                                       j.value("n", 1.0)));
  }
  if (req.contains("sizing")) {
    const auto& j = req.at("sizing");
    out["sizing"] = sizing_report(sizing_for_rate(sizing_inputs_from_json(j)),
                                  j.value("n", std::vector<double>{}));
  }
  if (out.empty()) {
    throw InvalidArgument("bounds request has none of lipschitz, covering, generic, ideal, sizing");
  }
  return out;
}

}  // namespace mrl
