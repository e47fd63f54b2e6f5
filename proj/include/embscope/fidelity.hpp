// SPDX-License-Identifier: Apache-2.0
//
// Three-way retrieval comparison for a trained autoencoder: original
// embeddings, decoded reconstructions, and sparse latents.
#pragma once

#include <cstddef>
#include <vector>

#include "embscope/metrics.hpp"
#include "embscope/qrels.hpp"
#include "embscope/sae.hpp"
#include "embscope/store.hpp"

namespace embscope {

std::vector<SparseLatent> encode_store(const SaeParams& params, const EmbeddingStore& store,
                                       std::size_t threads = 1);
/// Store of decoded latents with the same ids and kind.
EmbeddingStore decode_store(const SaeParams& params, const EmbeddingStore& like,
                            const std::vector<SparseLatent>& latents);
EmbeddingStore reconstruct_store(const SaeParams& params, const EmbeddingStore& store,
                                 std::size_t threads = 1);

/// Mean over embeddings of the per-dimension squared reconstruction error.
double mean_reconstruction_mse(const SaeParams& params,
                               std::span<const std::span<const double>> embeddings);

struct FidelityReport {
  MetricsReport original;
  MetricsReport reconstructed;
  MetricsReport sparse;
  double eval_mse = 0.0;
  std::size_t eval_embeddings = 0;  // queries plus the relevant docs of each
  std::vector<RankedList> original_runs;
  std::vector<RankedList> reconstructed_runs;
  std::vector<RankedList> sparse_runs;
};

/// Evaluates the queries that have qrels. Eval MSE covers those queries and
/// their relevant documents; it is also stored in `reconstructed.mse`.
FidelityReport evaluate_fidelity(const SaeParams& params, const EmbeddingStore& queries,
                                 const EmbeddingStore& corpus, const QrelSet& qrels,
                                 std::size_t cutoff = 10, std::size_t threads = 1);

/// Only the queries of `queries` that appear in `qrels`, in store order.
EmbeddingStore judged_queries(const EmbeddingStore& queries, const QrelSet& qrels);

}  // namespace embscope
