// SPDX-License-Identifier: Apache-2.0
//
// Retrieval steering by editing sparse latents before decoding.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "embscope/metrics.hpp"
#include "embscope/qrels.hpp"
#include "embscope/sae.hpp"
#include "embscope/store.hpp"

namespace embscope {

/// Adds `delta` to `feature`, inserting it when absent (so the result may hold
/// k + 1 entries). Throws InvalidArgument when feature >= latent_dim or delta
/// is not finite.
SparseLatent amplify(const SparseLatent& latent, std::uint32_t feature, double delta);

/// Highest activation, ties to the lower index; empty when the latent is.
std::optional<std::uint32_t> argmax_feature(const SparseLatent& latent);

enum class Aggregation { mean, max };

/// Document-side steering as seen by one query: each of its relevant
/// documents has the argmax feature of the query latent amplified by `delta`.
/// Documents of other queries are not touched.
struct DocumentEdits {
  std::optional<std::uint32_t> target;  // empty when the query latent is empty
  std::vector<std::size_t> rows;        // corpus rows of the relevant documents
  std::vector<DenseVector> embeddings;  // decoded amplified latents, aligned with rows
};

DocumentEdits document_edits(const SaeParams& params, const std::string& query_id,
                             const SparseLatent& query_latent, const EmbeddingStore& corpus,
                             const std::vector<SparseLatent>& corpus_latents,
                             const QrelSet& qrels, double delta);

/// The whole decoded corpus for one query after document-side steering.
EmbeddingStore manipulate_documents(const SaeParams& params, const std::string& query_id,
                                    const SparseLatent& query_latent,
                                    const EmbeddingStore& corpus,
                                    const std::vector<SparseLatent>& corpus_latents,
                                    const QrelSet& qrels, double delta);

struct ManipulationResult {
  EmbeddingStore store;                          // decoded, same ids as the input
  std::map<std::string, std::uint32_t> targets;  // query id -> amplified feature
  std::vector<std::string> skipped;              // queries without a usable target
};

/// For each judged query, amplifies the feature with the highest aggregated
/// activation over its relevant documents' latents, then decodes the queries.
ManipulationResult manipulate_queries(const SaeParams& params, const EmbeddingStore& queries,
                                      const std::vector<SparseLatent>& query_latents,
                                      const EmbeddingStore& corpus,
                                      const std::vector<SparseLatent>& corpus_latents,
                                      const QrelSet& qrels, double delta,
                                      Aggregation aggregation = Aggregation::mean);

enum class Pipeline { document, query };
const char* to_string(Pipeline pipeline);

struct GridLevel {
  double level;
  MetricsReport metrics;
};

struct GridSearchResult {
  Pipeline pipeline = Pipeline::document;
  MetricsReport baseline;  // delta = 0
  std::vector<GridLevel> levels;
  std::size_t skipped_queries = 0;
};

struct GridSearchConfig {
  double start = 0.0004;
  std::size_t steps = 16;
  std::size_t cutoff = 10;
  Aggregation aggregation = Aggregation::mean;
  std::size_t threads = 1;
};

/// Levels start, 2 start, 4 start, ...; each evaluated by dense retrieval of
/// reconstructed queries against the reconstructed corpus, with the
/// manipulated side swapped in (per query on the document side).
GridSearchResult amplification_grid_search(const SaeParams& params, Pipeline pipeline,
                                           const EmbeddingStore& queries,
                                           const EmbeddingStore& corpus, const QrelSet& qrels,
                                           const GridSearchConfig& config = {});

/// One JSON object per level: {"level", "mrr", "p10", "r10"}.
void write_grid_jsonl(std::ostream& out, const GridSearchResult& result);
/// `level,mrr,p10,r10` header plus one row per level.
void write_grid_csv(std::ostream& out, const GridSearchResult& result);

/// Decides whether a document relates to a feature; nullopt when unknown.
class PerspectiveLabeler {
 public:
  virtual ~PerspectiveLabeler() = default;
  virtual std::optional<bool> related(const std::string& doc_id, std::uint32_t feature) const = 0;
};

/// Related when the tokenized document contains any keyword of the feature.
class KeywordLabeler final : public PerspectiveLabeler {
 public:
  KeywordLabeler(std::map<std::uint32_t, std::vector<std::string>> keywords,
                 const std::unordered_map<std::string, std::string>& doc_texts);
  std::optional<bool> related(const std::string& doc_id, std::uint32_t feature) const override;

 private:
  std::map<std::uint32_t, std::vector<std::string>> keywords_;
  std::unordered_map<std::string, std::vector<std::string>> doc_tokens_;
};

/// Human judgments, one `feature doc_id 0|1` line each.
class AnnotationLabeler final : public PerspectiveLabeler {
 public:
  explicit AnnotationLabeler(std::map<std::pair<std::uint32_t, std::string>, bool> labels)
      : labels_(std::move(labels)) {}
  static AnnotationLabeler from_stream(std::istream& in);
  static AnnotationLabeler from_file(const std::filesystem::path& path);
  std::optional<bool> related(const std::string& doc_id, std::uint32_t feature) const override;

 private:
  std::map<std::pair<std::uint32_t, std::string>, bool> labels_;
};

struct PerspectiveOutcome {
  std::string query_id;
  std::uint32_t feature = 0;
  std::string summary;
  std::size_t cutoff = 5;
  bool labeled = true;
  std::optional<std::size_t> before;
  std::optional<std::size_t> after;
  std::vector<std::string> before_docs;
  std::vector<std::string> after_docs;
  std::vector<std::string> snippets;  // of after_docs
};

struct PerspectiveInputs {
  const SaeParams* params = nullptr;
  const EmbeddingStore* reconstructed_corpus = nullptr;
  const PerspectiveLabeler* labeler = nullptr;
  const std::unordered_map<std::string, std::string>* doc_texts = nullptr;     // optional
  const std::map<std::uint32_t, std::string>* feature_summaries = nullptr;     // optional
};

/// Retrieves top-`cutoff` for the plain reconstructed query and for the query
/// with each feature amplified by `delta`, counting related documents.
std::pair<PerspectiveOutcome, PerspectiveOutcome> perspective_experiment(
    const PerspectiveInputs& inputs, const std::string& query_id,
    std::span<const double> query, std::uint32_t feature_a, std::uint32_t feature_b,
    double delta, std::size_t cutoff = 5);

std::string perspective_to_json(const PerspectiveOutcome& outcome);

/// At most `max_chars` bytes of `text`, cut at a word boundary when possible.
std::string make_snippet(const std::string& text, std::size_t max_chars = 160);

}  // namespace embscope
