// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. The contrastive term compares, per query, the softmax
// over dot-product scores of its positive documents computed on original
// embeddings (target, constant) against the same softmax on reconstructions.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "embscope/numerics.hpp"
#include "embscope/sae.hpp"

namespace embscope {

struct LossWithGrad {
  double value = 0.0;
  DenseVector grad;  // d(loss)/d(xhat)
};

/// mean_i (xhat_i - x_i)^2, gradient 2 (xhat - x) / d.
LossWithGrad mse_loss(std::span<const double> x, std::span<const double> xhat);

/// Max-shifted softmax over positive-document scores (no temperature).
std::vector<double> positive_softmax(std::span<const double> scores);

struct KldResult {
  double value = 0.0;
  DenseVector grad_qhat;
  std::vector<DenseVector> grad_docs_hat;
};

/// sum_j P_j log(P_j / Phat_j) where P = softmax(q . d_j) and
/// Phat = softmax(qhat . dhat_j). Gradients flow only into qhat and dhat.
KldResult kld_loss(std::span<const double> q, std::span<const std::span<const double>> docs,
                   std::span<const double> qhat,
                   std::span<const std::span<const double>> docs_hat);

/// One query with its sampled positives, as views into embedding stores.
struct QueryGroup {
  std::span<const double> query;
  std::vector<std::span<const double>> positives;
};

struct CombinedLoss {
  double total = 0.0;
  double mse = 0.0;  // mean over every embedding in the batch
  double kld = 0.0;  // mean over queries that have positives
  std::size_t embeddings = 0;
  std::size_t kld_queries = 0;
  std::size_t skipped_queries = 0;  // queries without positives
  SaeGradients grads;
  /// Per-feature count of TopK selections over the batch.
  std::vector<std::uint32_t> feature_hits;
};

/// total = mean MSE over all embeddings + kld_weight * mean KLD over queries.
/// Work is split across `threads` workers with per-worker gradient buffers
/// that are reduced in worker order.
CombinedLoss combined_loss(std::span<const QueryGroup> batch, const SaeParams& params,
                           double kld_weight, std::size_t threads = 1);

}  // namespace embscope
