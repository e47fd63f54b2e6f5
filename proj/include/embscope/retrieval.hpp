// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "embscope/sae.hpp"
#include "embscope/store.hpp"

namespace embscope {

struct ScoredDoc {
  std::string doc_id;
  double score;
  bool operator==(const ScoredDoc&) const = default;
};

/// Results for one query, best first. Equal scores are ordered by doc_id.
struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> results;
  bool operator==(const RankedList&) const = default;
};

/// Exact top-`cutoff` by dot product for every query, in query order.
/// Throws InvalidArgument on dimension mismatch or cutoff == 0.
std::vector<RankedList> dense_retrieve(const EmbeddingStore& queries,
                                       const EmbeddingStore& corpus, std::size_t cutoff,
                                       std::size_t threads = 1);

/// Position of each corpus row in lexicographic doc_id order.
std::vector<std::uint32_t> lexical_ranks(const std::vector<std::string>& ids);

/// Top-`cutoff` of precomputed per-document scores (score desc, then doc_id).
RankedList rank_scores(const std::string& query_id, std::span<const double> scores,
                       const std::vector<std::string>& doc_ids,
                       std::span<const std::uint32_t> doc_rank, std::size_t cutoff);

/// Single-query variant; `doc_rank` comes from lexical_ranks(corpus.ids()).
RankedList dense_retrieve_one(const std::string& query_id, std::span<const double> query,
                              const EmbeddingStore& corpus,
                              std::span<const std::uint32_t> doc_rank, std::size_t cutoff);

struct Posting {
  std::uint32_t doc;  // position in doc_ids(), which is sorted
  double activation;
  bool operator==(const Posting&) const = default;
};

/// Per-feature posting lists over a document collection. Documents are
/// numbered in doc_id order, so every posting list is sorted by doc_id.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  std::size_t latent_dim() const noexcept { return postings_.size(); }
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  std::size_t total_postings() const noexcept { return total_postings_; }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::vector<Posting>& postings(std::uint32_t feature) const {
    return postings_.at(feature);
  }
  std::size_t nnz(std::uint32_t doc) const { return doc_nnz_.at(doc); }
  /// Rebuilds one document's latent from the postings.
  SparseLatent latent_of(std::uint32_t doc) const;

  bool operator==(const InvertedIndex&) const = default;

 private:
  friend InvertedIndex build_inverted_index(std::span<const std::string>,
                                            std::span<const SparseLatent>);
  std::vector<std::string> doc_ids_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::size_t> doc_nnz_;
  std::size_t total_postings_ = 0;
};

/// Indexes the nonzero entries of each latent. Throws InvalidArgument on
/// length mismatch, duplicate doc ids, or mixed latent dimensions.
InvertedIndex build_inverted_index(std::span<const std::string> doc_ids,
                                   std::span<const SparseLatent> latents);

/// Dot-product retrieval over documents sharing at least one nonzero feature
/// with the query. Documents with no shared feature are never returned.
RankedList sparse_retrieve(const InvertedIndex& index, const SparseLatent& query_latent,
                           std::size_t cutoff, const std::string& query_id = {});

/// `qid Q0 docid rank score runtag`, one line per result.
void write_run(std::ostream& out, std::span<const RankedList> runs, const std::string& tag);
void write_run(const std::filesystem::path& path, std::span<const RankedList> runs,
               const std::string& tag);
/// Reads a run file back; results keep file order within each query.
std::vector<RankedList> parse_run(std::istream& in);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace embscope
