// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

// Fully connected ReLU networks: architectures, parametrizations, the
// realization map x -> T_L(sigma(... sigma(T_1 x))) and its clipped variant.
//
// A parametrization is stored as one flat vector so that optimizers and norms
// can treat it as a point of [-R, R]^P. Layer l (0-based) occupies
//   W_l : a_{l+1} x a_l, row-major, followed by
//   B_l : a_{l+1}
// The clipping network is never part of that vector.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrl/error.hpp"
#include "mrl/rng.hpp"

namespace mrl {

class Architecture {
 public:
  Architecture() = default;

  explicit Architecture(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) {
      throw InvalidArgument("architecture needs at least an input and an output width");
    }
    for (std::size_t w : widths_) {
      if (w < 1) throw InvalidArgument("architecture widths must be >= 1");
    }
    if (widths_.back() != 1) throw InvalidArgument("architecture output width must be 1");
    offsets_.reserve(depth() + 1);
    std::size_t off = 0;
    for (std::size_t l = 0; l < depth(); ++l) {
      offsets_.push_back(off);
      off += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
    offsets_.push_back(off);
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_dim() const { return widths_.front(); }
  /// Number of affine maps L.
  std::size_t depth() const { return widths_.size() - 1; }
  /// max_l a_l, inputs included.
  std::size_t width() const { return *std::max_element(widths_.begin(), widths_.end()); }
  std::size_t param_count() const { return offsets_.empty() ? 0 : offsets_.back(); }

  std::size_t fan_in(std::size_t layer) const { return widths_[layer]; }
  std::size_t fan_out(std::size_t layer) const { return widths_[layer + 1]; }
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + fan_out(layer) * fan_in(layer);
  }

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.widths_ == b.widths_;
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
};

inline std::size_t param_count(const Architecture& arch) { return arch.param_count(); }

/// Output clipping constant D of clip_D.
struct ClipSpec {
  double D = 1.0;

  ClipSpec() = default;
  explicit ClipSpec(double d) : D(d) {
    if (!(d > 0.0) || !std::isfinite(d)) throw InvalidArgument("clip constant D must be > 0");
  }
};

class Parametrization {
 public:
  Parametrization() = default;

  /// All-zero parametrization. `bound` is the box radius R (nullopt = unbounded).
  explicit Parametrization(Architecture arch, std::optional<double> bound = std::nullopt)
      : arch_(std::move(arch)), values_(arch_.param_count(), 0.0), bound_(bound) {
    check_bound();
  }

  Parametrization(Architecture arch, std::vector<double> values,
                  std::optional<double> bound = std::nullopt)
      : arch_(std::move(arch)), values_(std::move(values)), bound_(bound) {
    if (values_.size() != arch_.param_count()) {
      throw DimensionMismatch("parameter vector length " + std::to_string(values_.size()) +
                              " does not match architecture (" +
                              std::to_string(arch_.param_count()) + ")");
    }
    check_bound();
    if (bound_) {
      for (double v : values_) {
        if (!(std::abs(v) <= *bound_)) {
          throw InvalidArgument("parameter entry outside the box [-R, R]");
        }
      }
    }
  }

  const Architecture& arch() const { return arch_; }
  std::optional<double> bound() const { return bound_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double weight(std::size_t layer, std::size_t row, std::size_t col) const {
    return values_[arch_.weight_offset(layer) + row * arch_.fan_in(layer) + col];
  }
  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return values_[arch_.weight_offset(layer) + row * arch_.fan_in(layer) + col];
  }
  double bias(std::size_t layer, std::size_t row) const {
    return values_[arch_.bias_offset(layer) + row];
  }
  double& bias(std::size_t layer, std::size_t row) {
    return values_[arch_.bias_offset(layer) + row];
  }

  friend bool operator==(const Parametrization& a, const Parametrization& b) {
    return a.arch_ == b.arch_ && a.values_ == b.values_ && a.bound_ == b.bound_;
  }

 private:
  void check_bound() const {
    if (bound_ && !(*bound_ > 0.0)) throw InvalidArgument("parameter bound R must be > 0");
  }

  Architecture arch_;
  std::vector<double> values_;
  std::optional<double> bound_;
};

namespace detail {

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

/// Writes the next layer's activations. `relu_out` controls the activation.
inline void affine(const Parametrization& params, std::size_t layer, std::span<const double> in,
                   std::span<double> out, bool relu_out) {
  const Architecture& arch = params.arch();
  const std::size_t fi = arch.fan_in(layer);
  const std::size_t fo = arch.fan_out(layer);
  const double* w = params.values().data() + arch.weight_offset(layer);
  const double* b = params.values().data() + arch.bias_offset(layer);
  for (std::size_t i = 0; i < fo; ++i) {
    double acc = b[i];
    const double* row = w + i * fi;
    for (std::size_t j = 0; j < fi; ++j) acc += row[j] * in[j];
    out[i] = relu_out ? relu(acc) : acc;
  }
}

}  // namespace detail

/// Reusable scratch space for repeated forward passes of one architecture.
class ForwardBuffer {
 public:
  explicit ForwardBuffer(const Architecture& arch)
      : a_(arch.width()), b_(arch.width()) {}

  double run(const Parametrization& params, std::span<const double> x) {
    const Architecture& arch = params.arch();
    if (x.size() != arch.input_dim()) {
      throw DimensionMismatch("input has dimension " + std::to_string(x.size()) +
                              ", network expects " + std::to_string(arch.input_dim()));
    }
    if (a_.size() < arch.width()) {
      a_.resize(arch.width());
      b_.resize(arch.width());
    }
    std::copy(x.begin(), x.end(), a_.begin());
    std::span<double> cur(a_);
    std::span<double> nxt(b_);
    const std::size_t L = arch.depth();
    for (std::size_t l = 0; l < L; ++l) {
      detail::affine(params, l, cur.first(arch.fan_in(l)), nxt.first(arch.fan_out(l)), l + 1 < L);
      std::swap(cur, nxt);
    }
    return cur[0];
  }

 private:
  std::vector<double> a_;
  std::vector<double> b_;
};

/// Realization f(x; theta). The last layer is affine with no activation.
inline double forward(const Parametrization& params, std::span<const double> x) {
  ForwardBuffer buf(params.arch());
  return buf.run(params, x);
}

inline double clip(double z, double D) { return std::clamp(z, -D, D); }

/// The fixed depth-2, 4-neuron network theta^D with
/// F(theta^D)(z) = relu(z) - relu(-z) - relu(z - D) + relu(-z - D) = clip_D(z).
/// It is frozen: callers never train, penalize or count it.
inline Parametrization clip_network(const ClipSpec& spec) {
  const double D = spec.D;
  return Parametrization(Architecture({1, 4, 1}),
                         {1.0, -1.0, 1.0, -1.0,   // W_1
                          0.0, 0.0, -D, -D,       // B_1
                          1.0, -1.0, -1.0, 1.0,   // W_2
                          0.0});                  // B_2
}

/// clip_D(f(x; theta)). Evaluated with a clamp, which is the same function
/// as the clip network and keeps |output| <= D exact in floating point.
inline double forward_clipped(const Parametrization& params, const ClipSpec& spec,
                              std::span<const double> x) {
  return clip(forward(params, x), spec.D);
}

/// |theta|_p^p over trainable entries.
inline double lp_norm_p(const Parametrization& params, double p) {
  if (!(p > 0.0) || !std::isfinite(p)) throw InvalidArgument("lp_norm_p requires 0 < p < inf");
  double s = 0.0;
  for (double v : params.values()) s += std::pow(std::abs(v), p);
  return s;
}

inline double linf_norm(const Parametrization& params) {
  double m = 0.0;
  for (double v : params.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double linf_dist(const Parametrization& a, const Parametrization& b) {
  if (!(a.arch() == b.arch())) throw DimensionMismatch("linf_dist: architectures differ");
  double m = 0.0;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) m = std::max(m, std::abs(va[i] - vb[i]));
  return m;
}

/// Entries i.i.d. uniform on [-r, r], r = min(R, 1/width).
inline Parametrization random_init(const Architecture& arch, double R, std::uint64_t seed) {
  if (!(R > 0.0)) throw InvalidArgument("random_init requires R > 0");
  const double r = std::min(R, 1.0 / static_cast<double>(arch.width()));
  Rng rng(seed);
  std::vector<double> v(arch.param_count());
  for (double& x : v) x = rng.uniform(-r, r);
  return Parametrization(arch, std::move(v), R);
}

/// Entries i.i.d. uniform on the full box [-R, R].
inline Parametrization random_uniform_box(const Architecture& arch, double R, std::uint64_t seed) {
  if (!(R > 0.0)) throw InvalidArgument("random_uniform_box requires R > 0");
  Rng rng(seed);
  std::vector<double> v(arch.param_count());
  for (double& x : v) x = rng.uniform(-R, R);
  return Parametrization(arch, std::move(v), R);
}

inline void project_box_inplace(std::span<double> values, double R) {
  for (double& v : values) v = std::clamp(v, -R, R);
}

inline Parametrization project_box(const Parametrization& params, double R) {
  if (!(R > 0.0)) throw InvalidArgument("project_box requires R > 0");
  std::vector<double> v(params.values().begin(), params.values().end());
  project_box_inplace(v, R);
  return Parametrization(params.arch(), std::move(v), R);
}

/// Points on which sup-norms over [0,1]^d are approximated: a full tensor grid
/// with 50 points per axis (endpoints included) when d <= 3, otherwise 10^5
/// Halton points.
inline std::vector<std::vector<double>> sup_norm_grid(std::size_t dim) {
  std::vector<std::vector<double>> pts;
  if (dim == 0) return pts;
  if (dim <= 3) {
    constexpr std::size_t m = 50;
    std::size_t total = 1;
    for (std::size_t k = 0; k < dim; ++k) total *= m;
    pts.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::vector<double> x(dim);
      std::size_t r = idx;
      for (std::size_t k = 0; k < dim; ++k) {
        x[k] = static_cast<double>(r % m) / static_cast<double>(m - 1);
        r /= m;
      }
      pts.push_back(std::move(x));
    }
  } else {
    constexpr std::size_t m = 100000;
    pts.reserve(m);
    for (std::size_t i = 1; i <= m; ++i) pts.push_back(halton_point(i, dim));
  }
  return pts;
}

// JSON form: {"widths":[...], "layers":[{"W":[[...]],"B":[...]}], "R":number|null, "clip_D":number}

inline nlohmann::json to_json(const Parametrization& params, const ClipSpec& clip = ClipSpec{}) {
  using nlohmann::json;
  const Architecture& arch = params.arch();
  json j;
  j["widths"] = arch.widths();
  json layers = json::array();
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    json W = json::array();
    for (std::size_t i = 0; i < arch.fan_out(l); ++i) {
      json row = json::array();
      for (std::size_t k = 0; k < arch.fan_in(l); ++k) row.push_back(params.weight(l, i, k));
      W.push_back(std::move(row));
    }
    json B = json::array();
    for (std::size_t i = 0; i < arch.fan_out(l); ++i) B.push_back(params.bias(l, i));
    layers.push_back({{"W", std::move(W)}, {"B", std::move(B)}});
  }
  j["layers"] = std::move(layers);
  j["R"] = params.bound() ? json(*params.bound()) : json(nullptr);
  j["clip_D"] = clip.D;
  return j;
}

struct ClippedNetwork {
  Parametrization params;
  ClipSpec clip;
};

inline ClippedNetwork network_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("widths") || !j.contains("layers")) {
    throw InvalidArgument("parametrization JSON needs \"widths\" and \"layers\"");
  }
  Architecture arch(j.at("widths").get<std::vector<std::size_t>>());
  std::optional<double> bound;
  if (j.contains("R") && !j.at("R").is_null()) bound = j.at("R").get<double>();
  ClipSpec clip = j.contains("clip_D") ? ClipSpec(j.at("clip_D").get<double>()) : ClipSpec{};
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != arch.depth()) {
    throw DimensionMismatch("\"layers\" length does not match widths");
  }
  std::vector<double> v(arch.param_count());
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const auto& W = layers[l].at("W");
    const auto& B = layers[l].at("B");
    if (W.size() != arch.fan_out(l) || B.size() != arch.fan_out(l)) {
      throw DimensionMismatch("layer " + std::to_string(l) + " has the wrong number of rows");
    }
    for (std::size_t i = 0; i < arch.fan_out(l); ++i) {
      if (W[i].size() != arch.fan_in(l)) {
        throw DimensionMismatch("layer " + std::to_string(l) + " has the wrong number of columns");
      }
      for (std::size_t k = 0; k < arch.fan_in(l); ++k) {
        v[arch.weight_offset(l) + i * arch.fan_in(l) + k] = W[i][k].get<double>();
      }
      v[arch.bias_offset(l) + i] = B[i].get<double>();
    }
  }
  return {Parametrization(std::move(arch), std::move(v), bound), clip};
}

}  // namespace mrl
