// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic joint laws on [0,1]^d x {-1,+1} with an exactly evaluable
// regression function eta(x) = E[Y | X = x].
//
// Every family draws labels the same way: X from the input marginal, U
// uniform on [-1,1] independent of X, and Y = +1 iff U <= eta(X). Then
// P(Y = +1 | X = x) = (1 + eta(x)) / 2 and E[Y | X = x] = eta(x).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrl/erm.hpp"
#include "mrl/error.hpp"
#include "mrl/relu_net.hpp"
#include "mrl/rng.hpp"

namespace mrl {

/// Product input marginal on [0,1]^d: uniform, or independent Beta(alpha_k, beta_k).
struct Marginal {
  enum class Kind { kUniform, kBeta };
  Kind kind = Kind::kUniform;
  std::size_t dim = 1;
  std::vector<double> alpha;
  std::vector<double> beta;

  static Marginal uniform(std::size_t d) {
    if (d < 1) throw InvalidArgument("marginal dimension must be >= 1");
    return Marginal{Kind::kUniform, d, {}, {}};
  }

  static Marginal product_beta(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || a.size() != b.size()) {
      throw InvalidArgument("beta marginal needs matching non-empty alpha and beta vectors");
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!(a[k] > 0.0) || !(b[k] > 0.0)) throw InvalidArgument("beta parameters must be > 0");
    }
    const std::size_t d = a.size();
    return Marginal{Kind::kBeta, d, std::move(a), std::move(b)};
  }

  void draw(Rng& rng, std::span<double> x) const {
    for (std::size_t k = 0; k < dim; ++k) {
      x[k] = kind == Kind::kUniform ? rng.uniform() : rng.beta(alpha[k], beta[k]);
    }
  }
};

struct TeacherSpec {
  ClippedNetwork teacher;
  Marginal marginal;
};

class SyntheticDistribution {
 public:
  enum class Family { kConstant, kConstantMargin, kAffine, kSmoothHardMargin, kTeacher };

  Family family() const { return family_; }
  const Marginal& marginal() const { return marginal_; }
  std::size_t dim() const { return marginal_.dim; }
  /// JSON descriptor this distribution can be rebuilt from.
  const nlohmann::json& descriptor() const { return descriptor_; }
  const std::optional<ClippedNetwork>& teacher() const { return teacher_; }

  /// eta(x) without domain checks; see eta_at for the checked version.
  double eta(std::span<const double> x) const {
    switch (family_) {
      case Family::kConstant:
        return value_;
      case Family::kConstantMargin:
        return x[axis_] >= threshold_ ? value_ : -value_;
      case Family::kAffine:
        return 2.0 * x[0] - 1.0;
      case Family::kSmoothHardMargin: {
        double g = 0.0;
        for (std::size_t k = 0; k < dim(); ++k) {
          const double s = std::sin(std::numbers::pi * frequency_ * x[k]);
          g += s * s;
        }
        return value_ + (1.0 - value_) * g / static_cast<double>(dim());
      }
      case Family::kTeacher: {
        thread_local ForwardBuffer buf(teacher_->params.arch());
        return clip(buf.run(teacher_->params, x), teacher_->clip.D);
      }
    }
    return 0.0;
  }

  /// Margin delta such that |eta| >= delta almost surely, when known by construction.
  std::optional<double> hard_margin() const {
    switch (family_) {
      case Family::kConstant:
        return value_ != 0.0 ? std::optional<double>(std::abs(value_)) : std::nullopt;
      case Family::kConstantMargin:
      case Family::kSmoothHardMargin:
        return value_;
      default:
        return std::nullopt;
    }
  }

  /// Closed-form Bayes risk E[(1 - |eta|)/2] when the family admits one.
  std::optional<double> exact_bayes_risk() const {
    if (family_ == Family::kConstant || family_ == Family::kConstantMargin) {
      return 0.5 * (1.0 - std::abs(value_));
    }
    return std::nullopt;
  }

  /// Y given X = x: +1 iff U <= eta(x) with U uniform on [-1, 1], so E[Y | x] = eta(x).
  int draw_label(Rng& rng, std::span<const double> x) const {
    const double u = rng.uniform(-1.0, 1.0);
    return u <= eta(x) ? 1 : -1;
  }

  /// One draw (X, Y); X is written into `x`.
  int draw(Rng& rng, std::span<double> x) const {
    marginal_.draw(rng, x);
    return draw_label(rng, x);
  }

  // Builders; use analytic_family / teacher_student for validated construction.
  static SyntheticDistribution make(Family family, Marginal marginal, double value,
                                    nlohmann::json descriptor) {
    SyntheticDistribution d;
    d.family_ = family;
    d.marginal_ = std::move(marginal);
    d.value_ = value;
    d.descriptor_ = std::move(descriptor);
    return d;
  }

  SyntheticDistribution& with_split(std::size_t axis, double threshold) {
    axis_ = axis;
    threshold_ = threshold;
    return *this;
  }
  SyntheticDistribution& with_frequency(double f) {
    frequency_ = f;
    return *this;
  }
  SyntheticDistribution& with_teacher(ClippedNetwork t) {
    teacher_ = std::move(t);
    return *this;
  }

 private:
  Family family_ = Family::kConstant;
  Marginal marginal_;
  double value_ = 0.0;  // constant value, margin delta
  std::size_t axis_ = 0;
  double threshold_ = 0.5;
  double frequency_ = 1.0;
  std::optional<ClippedNetwork> teacher_;
  nlohmann::json descriptor_;
};

inline nlohmann::json marginal_to_json(const Marginal& m) {
  if (m.kind == Marginal::Kind::kUniform) return {{"kind", "uniform"}};
  return {{"kind", "beta"}, {"alpha", m.alpha}, {"beta", m.beta}};
}

inline Marginal marginal_from_json(const nlohmann::json& j, std::size_t dim) {
  const std::string kind = j.value("kind", "uniform");
  if (kind == "uniform") return Marginal::uniform(dim);
  if (kind == "beta") {
    auto m = Marginal::product_beta(j.at("alpha").get<std::vector<double>>(),
                                    j.at("beta").get<std::vector<double>>());
    if (m.dim != dim) throw DimensionMismatch("beta marginal length does not match d");
    return m;
  }
  throw InvalidArgument("unknown marginal kind '" + kind + "'");
}

/// Lemma-style construction: eta = clip_1(f(.; theta*)) exactly.
inline SyntheticDistribution teacher_student(const TeacherSpec& spec) {
  if (spec.teacher.clip.D > 1.0) {
    throw InvalidArgument("teacher clip constant must be <= 1 so that eta maps into [-1,1]");
  }
  if (spec.teacher.params.arch().input_dim() != spec.marginal.dim) {
    throw DimensionMismatch("teacher input dimension does not match the marginal");
  }
  nlohmann::json desc = {
      {"kind", "teacher"},
      {"params",
       {{"d", spec.marginal.dim},
        {"marginal", marginal_to_json(spec.marginal)},
        {"teacher", to_json(spec.teacher.params, spec.teacher.clip)}}}};
  return SyntheticDistribution::make(SyntheticDistribution::Family::kTeacher, spec.marginal, 0.0,
                                     std::move(desc))
      .with_teacher(spec.teacher);
}

/// Analytic families. `params` may carry "d" (default 1) and "marginal"
/// (default uniform) plus the family's own keys:
///   constant            value in [-1,1]                     eta = value
///   constant-margin     delta in (0,1], axis, threshold      eta = +-delta split at x[axis] = threshold
///   affine              -                                    eta = 2 x_1 - 1
///   smooth-hard-margin  delta in (0,1], frequency            eta = delta + (1-delta) mean_k sin^2(pi f x_k)
inline SyntheticDistribution analytic_family(const std::string& kind,
                                             const nlohmann::json& params = nlohmann::json::object()) {
  using Family = SyntheticDistribution::Family;
  const std::size_t d = params.value("d", std::size_t{1});
  if (d < 1) throw InvalidArgument("d must be >= 1");
  Marginal marg = params.contains("marginal") ? marginal_from_json(params.at("marginal"), d)
                                              : Marginal::uniform(d);
  nlohmann::json desc_params = params.is_object() ? params : nlohmann::json::object();
  desc_params["d"] = d;
  desc_params["marginal"] = marginal_to_json(marg);

  auto delta_param = [&]() {
    const double delta = params.at("delta").get<double>();
    if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in (0, 1]");
    return delta;
  };

  if (kind == "constant") {
    const double c = params.value("value", 0.0);
    if (!(c >= -1.0 && c <= 1.0)) throw InvalidArgument("constant value must lie in [-1, 1]");
    desc_params["value"] = c;
    return SyntheticDistribution::make(Family::kConstant, marg, c,
                                       {{"kind", kind}, {"params", desc_params}});
  }
  if (kind == "constant-margin") {
    const double delta = delta_param();
    const std::size_t axis = params.value("axis", std::size_t{0});
    const double threshold = params.value("threshold", 0.5);
    if (axis >= d) throw InvalidArgument("axis must be < d");
    desc_params["axis"] = axis;
    desc_params["threshold"] = threshold;
    return SyntheticDistribution::make(Family::kConstantMargin, marg, delta,
                                       {{"kind", kind}, {"params", desc_params}})
        .with_split(axis, threshold);
  }
  if (kind == "affine") {
    return SyntheticDistribution::make(Family::kAffine, marg, 0.0,
                                       {{"kind", kind}, {"params", desc_params}});
  }
  if (kind == "smooth-hard-margin") {
    const double delta = delta_param();
    const double freq = params.value("frequency", 1.0);
    desc_params["frequency"] = freq;
    return SyntheticDistribution::make(Family::kSmoothHardMargin, marg, delta,
                                       {{"kind", kind}, {"params", desc_params}})
        .with_frequency(freq);
  }
  throw InvalidArgument("unknown distribution family '" + kind + "'");
}

inline void check_in_cube(const SyntheticDistribution& dist, std::span<const double> x) {
  if (x.size() != dist.dim()) throw DimensionMismatch("point dimension does not match distribution");
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("point outside the unit cube");
  }
}

inline double eta_at(const SyntheticDistribution& dist, std::span<const double> x) {
  check_in_cube(dist, x);
  return dist.eta(x);
}

/// sign(x) with sign(0) = 0.
inline int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

inline int bayes_classify(const SyntheticDistribution& dist, std::span<const double> x) {
  return sign_of(eta_at(dist, x));
}

inline Dataset sample(const SyntheticDistribution& dist, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample size must be >= 1");
  Dataset data;
  data.dim = dist.dim();
  data.seed = seed;
  data.inputs.resize(n * data.dim);
  data.labels.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = dist.draw(rng, std::span<double>(data.inputs).subspan(i * data.dim, data.dim));
  }
  return data;
}

struct BayesRiskEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;
};

/// E[(1 - |eta(X)|)/2]: closed form when available, Monte Carlo otherwise.
inline BayesRiskEstimate bayes_risk(const SyntheticDistribution& dist, std::size_t m,
                                    std::uint64_t seed) {
  if (m < 1) throw InvalidArgument("bayes_risk requires m >= 1");
  if (auto exact = dist.exact_bayes_risk()) return {*exact, 0.0, true};
  Rng rng(seed);
  std::vector<double> x(dist.dim());
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    dist.marginal().draw(rng, x);
    const double v = 0.5 * (1.0 - std::abs(dist.eta(x)));
    s += v;
    s2 += v * v;
  }
  const double md = static_cast<double>(m);
  const double mu = s / md;
  const double var = std::max(0.0, s2 / md - mu * mu);
  return {mu, std::sqrt(var / md), false};
}

struct RandomTeacher {
  ClippedNetwork teacher;
  int attempts = 0;
  /// Smallest |eta| seen on the certification points.
  double observed_margin = 0.0;
};

/// Draws teachers with entries uniform on [-R, R] until |clip_1(f)| >= min_margin
/// on the sup-norm grid and on `certify_m` uniform points.
inline RandomTeacher random_teacher(const Architecture& arch, double R, std::uint64_t seed,
                                    double min_margin, std::size_t certify_m = 100000,
                                    int max_attempts = 100000) {
  if (!(min_margin > 0.0 && min_margin <= 1.0)) {
    throw InvalidArgument("min_margin must lie in (0, 1]");
  }
  const auto grid = sup_norm_grid(arch.input_dim());
  std::vector<double> x(arch.input_dim());
  for (int a = 0; a < max_attempts; ++a) {
    Parametrization theta = random_uniform_box(arch, R, split_seed(seed, static_cast<std::uint64_t>(a)));
    ForwardBuffer buf(arch);
    double lo = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (const auto& p : grid) {
      lo = std::min(lo, std::abs(clip(buf.run(theta, p), 1.0)));
      if (lo < min_margin) {
        ok = false;
        break;
      }
    }
    if (ok) {
      Rng rng(split_seed(seed, 0x7e57ULL + static_cast<std::uint64_t>(a)));
      for (std::size_t i = 0; i < certify_m && ok; ++i) {
        for (double& v : x) v = rng.uniform();
        lo = std::min(lo, std::abs(clip(buf.run(theta, x), 1.0)));
        ok = lo >= min_margin;
      }
    }
    if (ok) return {{std::move(theta), ClipSpec(1.0)}, a + 1, lo};
  }
  throw Error("no teacher with the requested margin found in " + std::to_string(max_attempts) +
              " attempts");
}

/// Rebuilds a distribution from its JSON descriptor
/// {"kind": ..., "params": {...}, "teacher_file": optional path}.
/// A "teacher" descriptor takes the network from params.teacher, from
/// teacher_file (relative to `base_dir`), or draws one from params.random =
/// {"widths", "R", "seed", "min_margin", "certify_m"}.
inline SyntheticDistribution distribution_from_json(const nlohmann::json& j,
                                                    const std::filesystem::path& base_dir = {}) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidArgument("descriptor needs a \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  if (kind != "teacher") return analytic_family(kind, params);

  ClippedNetwork net;
  nlohmann::json random_desc;
  if (j.contains("teacher_file")) {
    std::filesystem::path p = j.at("teacher_file").get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    std::ifstream in(p);
    if (!in) throw InvalidArgument("cannot open teacher file " + p.string());
    net = network_from_json(nlohmann::json::parse(in));
  } else if (params.contains("teacher")) {
    net = network_from_json(params.at("teacher"));
  } else if (params.contains("random")) {
    random_desc = params.at("random");
    Architecture arch(random_desc.at("widths").get<std::vector<std::size_t>>());
    net = random_teacher(arch, random_desc.value("R", 1.0), random_desc.value("seed", std::uint64_t{0}),
                         random_desc.value("min_margin", 0.2),
                         random_desc.value("certify_m", std::size_t{100000}))
              .teacher;
  } else {
    throw InvalidArgument("teacher descriptor needs params.teacher, params.random or teacher_file");
  }
  const std::size_t d = net.params.arch().input_dim();
  Marginal marg = params.contains("marginal") ? marginal_from_json(params.at("marginal"), d)
                                              : Marginal::uniform(d);
  auto dist = teacher_student(TeacherSpec{net, marg});
  if (!random_desc.is_null()) {
    nlohmann::json desc = dist.descriptor();
    desc["params"]["random"] = random_desc;
    return SyntheticDistribution::make(SyntheticDistribution::Family::kTeacher, marg, 0.0, desc)
        .with_teacher(net);
  }
  return dist;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// Writes `x1,...,xd,y` rows plus a sidecar `<path>.json` with seed and kind.
inline void write_dataset_csv(const std::filesystem::path& path, const Dataset& data,
                              const std::string& kind) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t k = 0; k < data.dim; ++k) out << 'x' << (k + 1) << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto x = data.input(i);
    for (double v : x) out << format_double(v) << ',';
    out << data.labels[i] << '\n';
  }
  std::ofstream side(path.string() + ".json");
  if (!side) throw Error("cannot write sidecar for " + path.string());
  side << nlohmann::json{{"seed", data.seed}, {"kind", kind}, {"n", data.size()}, {"d", data.dim}}.dump(2)
       << '\n';
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("empty dataset file");
  Dataset data;
  data.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != data.dim + 1) throw InvalidArgument("malformed dataset row: " + line);
    for (std::size_t k = 0; k < data.dim; ++k) data.inputs.push_back(std::stod(cells[k]));
    data.labels.push_back(std::stoi(cells[data.dim]));
  }
  std::ifstream side(path.string() + ".json");
  if (side) data.seed = nlohmann::json::parse(side).value("seed", std::uint64_t{0});
  data.validate();
  return data;
}

}  // namespace mrl
