// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "embscope/error.hpp"
#include "embscope/numerics.hpp"
#include "test_support.hpp"

namespace embscope {
namespace {

// Full-sort oracle: value descending, index ascending, then sorted by index.
std::vector<IndexValue> sort_topk(const std::vector<double>& v, std::size_t k) {
  std::vector<std::uint32_t> order(v.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return v[a] > v[b]; });
  order.resize(std::min(k, v.size()));
  std::sort(order.begin(), order.end());
  std::vector<IndexValue> out;
  for (auto i : order) out.push_back({i, v[i]});
  return out;
}

TEST(TopkSelect, MatchesFullSortOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> small(-3, 3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const std::size_t k = 1 + rng() % 45;
    std::vector<double> v(n);
    // Small integer values force many ties.
    for (auto& x : v) x = (trial % 2 == 0) ? small(rng) : testing::gaussian_vector(rng, 1)[0];
    EXPECT_EQ(topk_select(v, k), sort_topk(v, k)) << "trial " << trial;
  }
}

TEST(TopkSelect, TiesGoToLowerIndex) {
  const std::vector<double> v{1.0, 2.0, 2.0, 2.0, 0.5};
  const auto got = topk_select(v, 2);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].index, 1u);
  EXPECT_EQ(got[1].index, 2u);
}

TEST(TopkSelect, KeepsNegativeValuesByRawOrder) {
  const std::vector<double> v{-5.0, -1.0, -3.0};
  const auto got = topk_select(v, 2);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0], (IndexValue{1, -1.0}));
  EXPECT_EQ(got[1], (IndexValue{2, -3.0}));
}

TEST(TopkSelect, RejectsEmptyInputAndZeroK) {
  const std::vector<double> empty;
  const std::vector<double> one{1.0};
  EXPECT_THROW(topk_select(empty, 1), InvalidArgument);
  EXPECT_THROW(topk_select(one, 0), InvalidArgument);
}

TEST(DenseVector, RejectsNonFiniteValues) {
  EXPECT_THROW(DenseVector(std::vector<double>{1.0, std::nan("")}), InvalidArgument);
  EXPECT_THROW(DenseVector({std::numeric_limits<double>::infinity()}), InvalidArgument);
  EXPECT_NO_THROW(DenseVector({0.0, -1.0}));
}

TEST(Dot, MatchesDirectSum) {
  const std::vector<double> a{1.0, 2.0, 3.0};
  const std::vector<double> b{4.0, -5.0, 6.0};
  EXPECT_DOUBLE_EQ(dot(a, b), 12.0);
}

TEST(Matvec, MatchesRowDots) {
  std::mt19937_64 rng(3);
  Matrix m(5, 7);
  for (auto& x : m.flat()) x = testing::gaussian_vector(rng, 1)[0];
  const auto x = testing::gaussian_vector(rng, 7);
  std::vector<double> y(5);
  matvec(m, x, y);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(y[r], dot(m.row(r), x), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  // After bias correction m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
  std::vector<double> params{1.0, 1.0, 1.0};
  const std::vector<double> grads{0.5, -2.0, 1e-3};
  auto state = AdamState::for_size(3);
  adam_step(params, grads, state, 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = 1.0 - 0.1 * grads[i] / (std::abs(grads[i]) + 1e-8);
    EXPECT_NEAR(params[i], expected, 1e-15);
  }
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  std::vector<double> p{0.0};
  auto state = AdamState::for_size(1);
  const std::vector<double> g1{1.0};
  const std::vector<double> g2{3.0};
  adam_step(p, g1, state, 0.01);
  adam_step(p, g2, state, 0.01);
  const double m = 0.9 * (0.1 * 1.0) + 0.1 * 3.0;
  const double v = 0.999 * (0.001 * 1.0) + 0.001 * 9.0;
  const double m_hat = m / (1 - 0.81);
  const double v_hat = v / (1 - 0.999 * 0.999);
  const double first = -0.01 / (1.0 + 1e-8);
  const double expected = first - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(p[0], expected, 1e-15);
}

TEST(Adam, RejectsSizeMismatch) {
  std::vector<double> p(2, 0.0);
  const std::vector<double> g(3, 0.0);
  auto state = AdamState::for_size(2);
  EXPECT_THROW(adam_step(p, g, state, 0.1), InvalidArgument);
}

TEST(CosineLr, HitsEndpointsAndMidpoint) {
  const CosineSchedule s{1e-3, 1e-5, 100};
  EXPECT_DOUBLE_EQ(cosine_lr(s, 0), 1e-3);
  EXPECT_NEAR(cosine_lr(s, 50), 1e-5 + (1e-3 - 1e-5) / 2, 1e-15);
  EXPECT_NEAR(cosine_lr(s, 100), 1e-5, 1e-15);
}

TEST(CosineLr, IsNonIncreasing) {
  const CosineSchedule s{1e-3, 0.0, 37};
  for (std::uint64_t t = 1; t <= 37; ++t) EXPECT_LE(cosine_lr(s, t), cosine_lr(s, t - 1));
}

TEST(ParallelChunks, CoversRangeExactlyOnce) {
  for (std::size_t threads : {1u, 2u, 3u, 8u}) {
    for (std::size_t count : {0u, 1u, 5u, 17u}) {
      std::vector<int> seen(count, 0);
      parallel_chunks(count, threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (auto i = b; i < e; ++i) ++seen[i];
      });
      for (int s : seen) EXPECT_EQ(s, 1);
      EXPECT_LE(worker_count(count, threads), std::max<std::size_t>(threads, 1));
    }
  }
}

TEST(Splitmix64, IsDeterministicAndMixes) {
  EXPECT_EQ(splitmix64(1), splitmix64(1));
  EXPECT_NE(splitmix64(1), splitmix64(2));
}

}  // namespace
}  // namespace embscope
