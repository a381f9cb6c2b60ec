// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "mrl/distributions.hpp"

namespace mrl {
namespace {

ClippedNetwork constant_teacher(std::size_t d, double c) {
  std::vector<double> v(d + 1, 0.0);
  v.back() = c;
  return {Parametrization(Architecture({d, 1}), v), ClipSpec(1.0)};
}

double mean_label(const Dataset& data) {
  double s = 0.0;
  for (int y : data.labels) s += y;
  return s / static_cast<double>(data.size());
}

TEST(TeacherStudent, ConstantOneTeacherGivesAllPositiveLabels) {
  const auto dist = teacher_student({constant_teacher(2, 1.0), Marginal::uniform(2)});
  const auto data = sample(dist, 5000, 1);
  for (int y : data.labels) EXPECT_EQ(y, 1);
}

TEST(TeacherStudent, ConstantTeacherLabelFrequency) {
  for (double c : {-0.6, 0.0, 0.3}) {
    const auto dist = teacher_student({constant_teacher(1, c), Marginal::uniform(1)});
    const std::size_t n = 200000;
    const auto data = sample(dist, n, 11);
    const double p_plus = 0.5 * (1.0 + mean_label(data));
    const double p = 0.5 * (1.0 + c);
    EXPECT_NEAR(p_plus, p, 3.0 * std::sqrt(p * (1.0 - p) / n) + 1e-12) << "c=" << c;
  }
}

TEST(TeacherStudent, ConditionalMeanMatchesTeacher) {
  const auto teacher = random_uniform_box(Architecture({2, 4, 4, 1}), 1.0, 31);
  const auto dist = teacher_student({{teacher, ClipSpec(1.0)}, Marginal::uniform(2)});
  Rng qrng(5);
  Rng lrng(6);
  constexpr int kDraws = 100000;
  for (int k = 0; k < 10; ++k) {
    const std::vector<double> x{qrng.uniform(), qrng.uniform()};
    const double eta = forward_clipped(teacher, ClipSpec(1.0), x);
    double s = 0.0;
    for (int i = 0; i < kDraws; ++i) s += dist.draw_label(lrng, x);
    const double se = std::sqrt(std::max(1.0 - eta * eta, 1e-12) / kDraws);
    EXPECT_NEAR(s / kDraws, eta, 3.0 * se) << "point " << k;
  }
}

TEST(TeacherStudent, RejectsWideClipAndDimensionMismatch) {
  EXPECT_THROW(teacher_student({{Parametrization(Architecture({2, 1})), ClipSpec(2.0)}, Marginal::uniform(2)}),
               InvalidArgument);
  EXPECT_THROW(teacher_student({constant_teacher(2, 0.1), Marginal::uniform(3)}), DimensionMismatch);
}

TEST(AnalyticFamily, EtaValues) {
  const auto affine = analytic_family("affine", {{"d", 2}});
  EXPECT_DOUBLE_EQ(eta_at(affine, std::vector<double>{0.75, 0.1}), 0.5);
  const auto cm = analytic_family("constant-margin", {{"d", 2}, {"delta", 0.4}});
  EXPECT_DOUBLE_EQ(eta_at(cm, std::vector<double>{0.9, 0.2}), 0.4);
  EXPECT_DOUBLE_EQ(eta_at(cm, std::vector<double>{0.1, 0.2}), -0.4);
  const auto teacher = random_uniform_box(Architecture({2, 3, 1}), 1.0, 2);
  const auto ts = teacher_student({{teacher, ClipSpec(1.0)}, Marginal::uniform(2)});
  const std::vector<double> x{0.3, 0.8};
  EXPECT_EQ(eta_at(ts, x), forward_clipped(teacher, ClipSpec(1.0), x));
}

TEST(AnalyticFamily, RejectsBadParameters) {
  EXPECT_THROW(analytic_family("constant-margin", {{"delta", 0.0}}), InvalidArgument);
  EXPECT_THROW(analytic_family("constant-margin", {{"delta", 1.5}}), InvalidArgument);
  EXPECT_THROW(analytic_family("smooth-hard-margin", {{"delta", -0.1}}), InvalidArgument);
  EXPECT_THROW(analytic_family("nonexistent"), InvalidArgument);
  EXPECT_THROW(analytic_family("constant", {{"value", 2.0}}), InvalidArgument);
}

TEST(AnalyticFamily, ConstantMarginHoldsOnEverySample) {
  const auto dist = analytic_family("constant-margin", {{"d", 3}, {"delta", 0.5}, {"axis", 2}});
  const auto data = sample(dist, 20000, 3);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_GE(std::abs(dist.eta(data.input(i))), 0.5);
  EXPECT_EQ(*dist.hard_margin(), 0.5);
}

TEST(AnalyticFamily, SmoothHardMarginMinimum) {
  const auto dist = analytic_family("smooth-hard-margin", {{"d", 2}, {"delta", 0.3}, {"frequency", 2.0}});
  Rng rng(4);
  std::vector<double> x(2);
  double lo = 1.0;
  for (int i = 0; i < 1000000; ++i) {
    dist.marginal().draw(rng, x);
    lo = std::min(lo, std::abs(dist.eta(x)));
  }
  EXPECT_GE(lo, 0.3);
}

TEST(AnalyticFamily, AffineMarginCdfIsIdentity) {
  const auto dist = analytic_family("affine", {{"d", 1}});
  Rng rng(8);
  std::vector<double> x(1);
  const std::size_t m = 400000;
  std::vector<double> a(m);
  for (auto& v : a) {
    dist.marginal().draw(rng, x);
    v = std::abs(dist.eta(x));
  }
  for (int k = 1; k <= 9; ++k) {
    const double t = 0.1 * k;
    const double p = static_cast<double>(std::count_if(a.begin(), a.end(), [t](double v) { return v <= t; })) / m;
    EXPECT_NEAR(p, t, 3.0 * std::sqrt(t * (1.0 - t) / m));
  }
}

TEST(Sample, DeterministicBySeed) {
  const auto dist = analytic_family("affine", {{"d", 3}});
  EXPECT_EQ(sample(dist, 100, 5), sample(dist, 100, 5));
  EXPECT_FALSE(sample(dist, 100, 5) == sample(dist, 100, 6));
  EXPECT_THROW(sample(dist, 0, 1), InvalidArgument);
}

TEST(Sample, EtaOneGivesPositiveLabels) {
  const auto dist = analytic_family("constant", {{"d", 2}, {"value", 1.0}});
  for (int y : sample(dist, 1000, 2).labels) EXPECT_EQ(y, 1);
}

TEST(Sample, AffineLabelMeanIsZero) {
  const auto dist = analytic_family("affine", {{"d", 2}});
  const std::size_t n = 1000000;
  const auto data = sample(dist, n, 21);
  // Var(Y) = 1 since E[Y] = 0.
  EXPECT_NEAR(mean_label(data), 0.0, 3.0 / std::sqrt(static_cast<double>(n)));
  data.validate();
}

TEST(BayesClassify, SignConvention) {
  const auto half = analytic_family("constant", {{"value", 0.5}});
  const auto neg = analytic_family("constant", {{"value", -0.1}});
  const auto zero = analytic_family("constant", {{"value", 0.0}});
  const std::vector<double> x{0.5};
  EXPECT_EQ(bayes_classify(half, x), 1);
  EXPECT_EQ(bayes_classify(neg, x), -1);
  EXPECT_EQ(bayes_classify(zero, x), 0);
  EXPECT_THROW(bayes_classify(half, std::vector<double>{1.5}), InvalidArgument);
}

TEST(BayesRisk, ClosedFormsAndMonteCarlo) {
  EXPECT_EQ(bayes_risk(analytic_family("constant", {{"value", 0.5}}), 10, 1).value, 0.25);
  EXPECT_EQ(bayes_risk(analytic_family("constant", {{"value", 0.0}}), 10, 1).value, 0.5);
  EXPECT_EQ(bayes_risk(analytic_family("constant-margin", {{"delta", 0.3}}), 10, 1).value, 0.35);
  const auto est = bayes_risk(analytic_family("affine", {{"d", 1}}), 1000000, 9);
  EXPECT_FALSE(est.exact);
  EXPECT_NEAR(est.value, 0.25, 3.0 * est.std_error);
}

// The closed-form (1 - |eta|)/2 against raw label disagreement with sign(eta).
TEST(BayesRisk, AgreesWithLabelFrequency) {
  const auto dist = analytic_family("smooth-hard-margin", {{"d", 2}, {"delta", 0.2}});
  const std::size_t m = 500000;
  Rng rng(12);
  std::vector<double> x(2);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = dist.draw(rng, x);
    if (sign_of(dist.eta(x)) != y) ++wrong;
  }
  const double freq = static_cast<double>(wrong) / m;
  const auto est = bayes_risk(dist, m, 13);
  EXPECT_NEAR(freq, est.value, 3.0 * std::sqrt(freq * (1 - freq) / m + est.std_error * est.std_error));
}

TEST(RandomTeacher, CertifiedMargin) {
  const auto rt = random_teacher(Architecture({2, 3, 1}), 1.0, 7, 0.2, 20000);
  EXPECT_GE(rt.observed_margin, 0.2);
  const auto dist = teacher_student({rt.teacher, Marginal::uniform(2)});
  for (const auto& p : sup_norm_grid(2)) EXPECT_GE(std::abs(dist.eta(p)), 0.2);
}

TEST(Descriptor, RoundTripsThroughJson) {
  const auto a = analytic_family("constant-margin", {{"d", 2}, {"delta", 0.5}, {"threshold", 0.3}});
  const auto b = distribution_from_json(a.descriptor());
  const std::vector<double> x{0.31, 0.9};
  EXPECT_EQ(a.eta(x), b.eta(x));
  const auto teacher = random_uniform_box(Architecture({2, 3, 1}), 1.0, 2);
  const auto ts = teacher_student({{teacher, ClipSpec(1.0)}, Marginal::product_beta({2, 2}, {3, 1})});
  const auto ts2 = distribution_from_json(ts.descriptor());
  EXPECT_EQ(ts.eta(x), ts2.eta(x));
  EXPECT_EQ(sample(ts, 50, 1), sample(ts2, 50, 1));
}

TEST(Descriptor, RandomTeacherIsReproducible) {
  const nlohmann::json desc = {
      {"kind", "teacher"},
      {"params", {{"random", {{"widths", {2, 3, 1}}, {"seed", 7}, {"min_margin", 0.2}, {"certify_m", 10000}}}}}};
  const auto a = distribution_from_json(desc);
  const auto b = distribution_from_json(desc);
  EXPECT_EQ(a.teacher()->params, b.teacher()->params);
}

TEST(DatasetCsv, RoundTrip) {
  const auto dist = analytic_family("affine", {{"d", 2}});
  const auto data = sample(dist, 40, 77);
  const auto path = std::filesystem::temp_directory_path() / "mrl_dataset_roundtrip.csv";
  write_dataset_csv(path, data, "affine");
  const auto back = read_dataset_csv(path);
  EXPECT_EQ(back, data);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

}  // namespace
}  // namespace mrl
