// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "embscope/error.hpp"
#include "embscope/losses.hpp"
#include "test_support.hpp"

namespace embscope {
namespace {

using testing::gaussian_vector;

TEST(MseLoss, IdentityAndUnitOffsets) {
  const std::vector<double> x{0.0, 0.0};
  const std::vector<double> ones{1.0, 1.0};
  EXPECT_EQ(mse_loss(x, x).value, 0.0);
  const auto r = mse_loss(x, ones);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.grad, DenseVector({1.0, 1.0}));
}

TEST(MseLoss, MatchesDirectSummation) {
  std::mt19937_64 rng(1);
  const auto x = gaussian_vector(rng, 9);
  const auto y = gaussian_vector(rng, 9);
  double s = 0.0;
  for (std::size_t i = 0; i < 9; ++i) s += (y[i] - x[i]) * (y[i] - x[i]);
  const auto r = mse_loss(x, y);
  EXPECT_NEAR(r.value, s / 9, 1e-14);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(r.grad[i], 2 * (y[i] - x[i]) / 9, 1e-15);
}

TEST(MseLoss, RejectsLengthMismatch) {
  const std::vector<double> a(2), b(3);
  EXPECT_THROW(mse_loss(a, b), InvalidArgument);
}

TEST(PositiveSoftmax, ClosedForms) {
  const std::vector<double> zeros{0.0, 0.0};
  const auto half = positive_softmax(zeros);
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);
  const std::vector<double> ln2{std::log(2.0), 0.0};
  const auto p = positive_softmax(ln2);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(PositiveSoftmax, ShiftInvariantAndNormalized) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    auto s = gaussian_vector(rng, 1 + rng() % 20, 10.0);
    const auto p = positive_softmax(s);
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (auto& v : s) v += 1234.5;
    const auto shifted = positive_softmax(s);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(shifted[i], p[i], 1e-12);
  }
}

TEST(PositiveSoftmax, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(positive_softmax(std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(positive_softmax(std::vector<double>{1.0, NAN}), InvalidArgument);
}

// Builds inputs whose original and reconstructed score vectors are given.
struct KldCase {
  std::vector<double> q, qhat;
  std::vector<std::vector<double>> docs, docs_hat;
};

KldCase case_with_scores(const std::vector<double>& s, const std::vector<double>& t) {
  // q = qhat = e0, doc j = s_j e0 (+ e1 to keep it nonzero), docs_hat likewise with t.
  KldCase c;
  c.q = {1.0, 0.0};
  c.qhat = {1.0, 0.0};
  for (double v : s) c.docs.push_back({v, 1.0});
  for (double v : t) c.docs_hat.push_back({v, 1.0});
  return c;
}

KldResult run(const KldCase& c) {
  std::vector<std::span<const double>> d, dh;
  for (const auto& v : c.docs) d.emplace_back(v);
  for (const auto& v : c.docs_hat) dh.emplace_back(v);
  return kld_loss(c.q, d, c.qhat, dh);
}

TEST(KldLoss, ClosedFormCase) {
  const auto r = run(case_with_scores({0.0, 0.0}, {std::log(2.0), 0.0}));
  EXPECT_NEAR(r.value, 0.5 * std::log(9.0 / 8.0), 1e-12);
}

TEST(KldLoss, ZeroForIdenticalAndShiftedScores) {
  EXPECT_EQ(run(case_with_scores({0.3, -1.0, 2.0}, {0.3, -1.0, 2.0})).value, 0.0);
  EXPECT_NEAR(run(case_with_scores({0.3, -1.0, 2.0}, {5.3, 4.0, 7.0})).value, 0.0, 1e-15);
}

TEST(KldLoss, NonNegativeOnRandomScores) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t m = 1 + rng() % 16;
    const auto r = run(case_with_scores(gaussian_vector(rng, m, 5.0), gaussian_vector(rng, m, 5.0)));
    EXPECT_GE(r.value, -1e-12);
  }
}

TEST(KldLoss, MatchesIndependentEvaluation) {
  std::mt19937_64 rng(4);
  const auto s = gaussian_vector(rng, 5);
  const auto t = gaussian_vector(rng, 5);
  EXPECT_NEAR(run(case_with_scores(s, t)).value, testing::softmax_kl(s, t), 1e-13);
}

TEST(KldLoss, RejectsShapeErrors) {
  const std::vector<double> q{1.0, 0.0};
  const std::vector<double> d3{1.0, 0.0, 0.0};
  std::vector<std::span<const double>> docs{d3};
  EXPECT_THROW(kld_loss(q, docs, q, docs), InvalidArgument);
  std::vector<std::span<const double>> none;
  EXPECT_THROW(kld_loss(q, none, q, none), InvalidArgument);
}

TEST(CombinedLoss, GradientMatchesCentralDifferences) {
  // Micro-batch of 2 queries x 2 positives, d=4, n=8, k=2.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testing::random_params(rng, 4, 8, 2);
    const auto groups = testing::random_groups(rng, 4, 2, 2);
    EXPECT_LE(testing::gradient_relative_error(p, groups, 1.0), 1e-4) << "trial " << trial;
  }
}

TEST(CombinedLoss, ZeroWeightEqualsMseObjective) {
  std::mt19937_64 rng(6);
  const auto p = testing::random_params(rng, 4, 8, 2);
  const auto groups = testing::random_groups(rng, 4, 3, 2);
  const auto views = testing::as_views(groups);
  const auto r = combined_loss(views, p, 0.0);
  EXPECT_EQ(r.total, r.mse);
  EXPECT_GT(r.kld, 0.0);
  EXPECT_EQ(r.embeddings, 9u);
  const auto weighted = combined_loss(views, p, 2.0);
  EXPECT_NEAR(weighted.total, r.mse + 2.0 * r.kld, 1e-14);
}

TEST(CombinedLoss, QueriesWithoutPositivesCountOnlyForMse) {
  std::mt19937_64 rng(7);
  const auto p = testing::random_params(rng, 4, 8, 2);
  auto groups = testing::random_groups(rng, 4, 2, 2);
  groups[1].positives.clear();
  const auto r = combined_loss(testing::as_views(groups), p, 1.0);
  EXPECT_EQ(r.skipped_queries, 1u);
  EXPECT_EQ(r.kld_queries, 1u);
  EXPECT_EQ(r.embeddings, 4u);
}

TEST(CombinedLoss, ThreadCountDoesNotChangeLossValue) {
  std::mt19937_64 rng(8);
  const auto p = testing::random_params(rng, 6, 12, 3);
  const auto views_src = testing::random_groups(rng, 6, 9, 3);
  const auto views = testing::as_views(views_src);
  const auto one = combined_loss(views, p, 1.0, 1);
  const auto four = combined_loss(views, p, 1.0, 4);
  EXPECT_NEAR(one.total, four.total, 1e-12);
}

TEST(CombinedLoss, PerfectReconstructionGivesZero) {
  // With k = n = d, identity encoder/decoder and zero biases, x_hat = x
  // whenever every pre-activation is selected.
  SaeParams p(3, 3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    p.encoder(i, i) = 1.0;
    p.decoder(i, i) = 1.0;
  }
  std::mt19937_64 rng(9);
  const auto groups = testing::random_groups(rng, 3, 2, 3);
  const auto r = combined_loss(testing::as_views(groups), p, 1.0);
  EXPECT_NEAR(r.total, 0.0, 1e-15);
}

}  // namespace
}  // namespace embscope
