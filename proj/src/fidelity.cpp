// SPDX-License-Identifier: Apache-2.0
#include "embscope/fidelity.hpp"

#include <algorithm>

#include "embscope/error.hpp"

namespace embscope {

std::vector<SparseLatent> encode_store(const SaeParams& params, const EmbeddingStore& store,
                                       std::size_t threads) {
  if (store.dim() != params.input_dim) {
    throw InvalidArgument("encode_store: store dimension " + std::to_string(store.dim()) +
                          " != model input dimension " + std::to_string(params.input_dim));
  }
  std::vector<SparseLatent> out(store.size());
  parallel_chunks(store.size(), threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) out[i] = encode(params, store.row(i));
  });
  return out;
}

EmbeddingStore decode_store(const SaeParams& params, const EmbeddingStore& like,
                            const std::vector<SparseLatent>& latents) {
  if (latents.size() != like.size()) {
    throw InvalidArgument("decode_store: latent count differs from store size");
  }
  EmbeddingStore out(params.input_dim, like.kind());
  out.reserve(like.size());
  for (std::size_t i = 0; i < like.size(); ++i) {
    out.add(like.id(i), decode(params, latents[i]).span());
  }
  return out;
}

EmbeddingStore reconstruct_store(const SaeParams& params, const EmbeddingStore& store,
                                 std::size_t threads) {
  return decode_store(params, store, encode_store(params, store, threads));
}

double mean_reconstruction_mse(const SaeParams& params,
                               std::span<const std::span<const double>> embeddings) {
  if (embeddings.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& x : embeddings) {
    const auto xhat = reconstruct(params, x).xhat;
    double se = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double diff = xhat[t] - x[t];
      se += diff * diff;
    }
    sum += se / static_cast<double>(x.size());
  }
  return sum / static_cast<double>(embeddings.size());
}

EmbeddingStore judged_queries(const EmbeddingStore& queries, const QrelSet& qrels) {
  EmbeddingStore out(queries.dim(), queries.kind());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (qrels.contains(queries.id(i))) out.add(queries.id(i), queries.row(i));
  }
  return out;
}

FidelityReport evaluate_fidelity(const SaeParams& params, const EmbeddingStore& queries,
                                 const EmbeddingStore& corpus, const QrelSet& qrels,
                                 std::size_t cutoff, std::size_t threads) {
  if (cutoff == 0) throw InvalidArgument("evaluate_fidelity: cutoff must be >= 1");
  if (queries.dim() != params.input_dim || corpus.dim() != params.input_dim) {
    throw InvalidArgument("evaluate_fidelity: embedding dimension does not match the model");
  }
  const auto judged = judged_queries(queries, qrels);
  if (judged.empty()) throw InvalidArgument("evaluate_fidelity: no query has qrels");
  const std::size_t depth = std::max<std::size_t>(cutoff, 10);

  FidelityReport report;
  auto original_runs = dense_retrieve(judged, corpus, depth, threads);
  report.original = compute_metrics(original_runs, qrels, cutoff);

  const auto query_latents = encode_store(params, judged, threads);
  const auto doc_latents = encode_store(params, corpus, threads);
  const auto query_hat = decode_store(params, judged, query_latents);
  const auto corpus_hat = decode_store(params, corpus, doc_latents);
  auto recon_runs = dense_retrieve(query_hat, corpus_hat, depth, threads);
  report.reconstructed = compute_metrics(recon_runs, qrels, cutoff);

  const auto index = build_inverted_index(corpus.ids(), doc_latents);
  std::vector<RankedList> sparse_runs(judged.size());
  parallel_chunks(judged.size(), threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t q = b; q < e; ++q) {
      sparse_runs[q] = sparse_retrieve(index, query_latents[q], depth, judged.id(q));
    }
  });
  report.sparse = compute_metrics(sparse_runs, qrels, cutoff);

  std::vector<std::span<const double>> eval_set;
  for (std::size_t q = 0; q < judged.size(); ++q) {
    eval_set.push_back(judged.row(q));
    for (const auto& doc : qrels.relevant(judged.id(q))) {
      const auto row = corpus.find(doc);
      if (!row) {
        throw InvalidArgument("evaluate_fidelity: relevant doc '" + doc + "' not in corpus");
      }
      eval_set.push_back(corpus.row(*row));
    }
  }
  report.eval_mse = mean_reconstruction_mse(params, eval_set);
  report.eval_embeddings = eval_set.size();
  report.reconstructed.mse = report.eval_mse;
  report.original_runs = std::move(original_runs);
  report.reconstructed_runs = std::move(recon_runs);
  report.sparse_runs = std::move(sparse_runs);
  return report;
}

}  // namespace embscope
