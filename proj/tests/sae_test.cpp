// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "embscope/error.hpp"
#include "embscope/sae.hpp"
#include "test_support.hpp"

namespace embscope {
namespace {

using testing::gaussian_vector;
using testing::random_params;

TEST(SparseLatent, ValidatesEntries) {
  EXPECT_THROW(SparseLatent(4, {{4, 1.0}}), InvalidArgument);
  EXPECT_THROW(SparseLatent(4, {{2, 1.0}, {1, 1.0}}), InvalidArgument);
  EXPECT_THROW(SparseLatent(4, {{1, 1.0}, {1, 2.0}}), InvalidArgument);
  EXPECT_THROW(SparseLatent(4, {{1, std::nan("")}}), InvalidArgument);
  const SparseLatent h(4, {{1, 2.0}, {3, 0.0}});
  EXPECT_EQ(h.nnz(), 1u);
  EXPECT_EQ(h.activation(1), 2.0);
  EXPECT_EQ(h.activation(2), 0.0);
  EXPECT_EQ(h.to_dense(), (std::vector<double>{0.0, 2.0, 0.0, 0.0}));
}

TEST(SaeParams, RejectsBadK) {
  EXPECT_THROW(SaeParams(4, 8, 0), InvalidArgument);
  EXPECT_THROW(SaeParams(4, 8, 9), InvalidArgument);
  EXPECT_NO_THROW(SaeParams(4, 8, 8));
}

TEST(Encode, ExactSparsityOnRandomInputs) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng() % 12;
    const std::size_t n = 1 + rng() % 24;
    const std::size_t k = 1 + rng() % n;
    const auto p = random_params(rng, d, n, k);
    for (int i = 0; i < 10; ++i) {
      const auto h = encode(p, gaussian_vector(rng, d));
      EXPECT_EQ(h.nnz(), std::min(k, n));
      EXPECT_EQ(h.latent_dim(), n);
    }
  }
}

TEST(Encode, SelectsLargestPreActivationsFromDefinition) {
  std::mt19937_64 rng(5);
  const auto p = random_params(rng, 6, 10, 3);
  const auto x = gaussian_vector(rng, 6);
  std::vector<double> z(10);
  for (std::size_t j = 0; j < 10; ++j) {
    z[j] = p.encoder_bias[j];
    for (std::size_t i = 0; i < 6; ++i) z[j] += p.encoder(j, i) * (x[i] - p.decoder_bias[i]);
  }
  const auto h = encode(p, x);
  double smallest_kept = INFINITY;
  for (const auto& e : h.entries()) {
    EXPECT_NEAR(e.activation, z[e.index], 1e-12);
    smallest_kept = std::min(smallest_kept, e.activation);
  }
  for (std::size_t j = 0; j < 10; ++j) {
    if (h.activation(static_cast<std::uint32_t>(j)) == 0.0) {
      EXPECT_LE(z[j], smallest_kept);
    }
  }
}

TEST(Decode, MatchesDefinition) {
  std::mt19937_64 rng(6);
  const auto p = random_params(rng, 5, 7, 2);
  const SparseLatent h(7, {{1, 0.5}, {6, -2.0}});
  const auto xhat = decode(p, h);
  for (std::size_t i = 0; i < 5; ++i) {
    const double expected = p.decoder_bias[i] + 0.5 * p.decoder(1, i) - 2.0 * p.decoder(6, i);
    EXPECT_NEAR(xhat[i], expected, 1e-12);
  }
}

TEST(Encode, RejectsDimensionMismatch) {
  std::mt19937_64 rng(7);
  const auto p = random_params(rng, 4, 8, 2);
  EXPECT_THROW(encode(p, gaussian_vector(rng, 5)), InvalidArgument);
  EXPECT_THROW(decode(p, SparseLatent(9)), InvalidArgument);
}

TEST(InitializeParams, UnitDecoderColumnsTiedEncoderAndMeanBias) {
  std::mt19937_64 rng(8);
  const auto a = gaussian_vector(rng, 4);
  const auto b = gaussian_vector(rng, 4);
  const std::vector<std::span<const double>> sample{a, b};
  const auto p = initialize_params(4, 9, 3, sample, 42);
  for (std::uint32_t j = 0; j < 9; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      norm += p.decoder(j, i) * p.decoder(j, i);
      EXPECT_EQ(p.encoder(j, i), p.decoder(j, i));
    }
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_EQ(p.encoder_bias[j], 0.0);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.decoder_bias[i], (a[i] + b[i]) / 2, 1e-15);
  EXPECT_EQ(p, initialize_params(4, 9, 3, sample, 42));
  EXPECT_NE(p, initialize_params(4, 9, 3, sample, 43));
}

TEST(Backward, MseGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng() % 7;
    const std::size_t n = 2 + rng() % 15;
    const std::size_t k = 1 + rng() % std::min<std::size_t>(4, n);
    const auto p = random_params(rng, d, n, k);
    const auto groups = testing::random_groups(rng, d, 1, 0);
    EXPECT_LE(testing::gradient_relative_error(p, groups, 0.0), 1e-4) << "trial " << trial;
  }
}

TEST(Backward, ReturnsInputGradientFromDefinition) {
  // d(loss)/dx = W_enc_S^T (W_dec_S^T g) over the active set S.
  std::mt19937_64 rng(10);
  const auto p = random_params(rng, 3, 5, 2);
  const auto x = gaussian_vector(rng, 3);
  const auto g = gaussian_vector(rng, 3);
  const auto h = encode(p, x);
  const auto r = backward(p, x, h, g);
  std::vector<double> expected(3, 0.0);
  for (const auto& e : h.entries()) {
    double dz = 0.0;
    for (std::size_t i = 0; i < 3; ++i) dz += p.decoder(e.index, i) * g[i];
    for (std::size_t i = 0; i < 3; ++i) expected[i] += p.encoder(e.index, i) * dz;
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.grad_x[i], expected[i], 1e-12);
}

}  // namespace
}  // namespace embscope
