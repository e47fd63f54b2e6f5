// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "embscope/clients.hpp"
#include "embscope/retrieval.hpp"
#include "embscope/sae.hpp"

namespace embscope {

struct RankFrequency {
  std::size_t rank;  // 1-based
  std::uint64_t count;
  bool operator==(const RankFrequency&) const = default;
};

struct FrequencyProfile {
  std::vector<std::uint64_t> feature_counts;  // per feature, nonzero activations
  std::vector<RankFrequency> feature_series;  // nonzero counts, descending
  std::map<std::string, std::uint64_t> unigram_counts;
  std::vector<RankFrequency> unigram_series;
  std::uint64_t total_nnz = 0;
};

/// Counts nonzero activations per feature and, when `texts` is given,
/// unigram occurrences of the tokenized texts. Throws on an empty corpus.
FrequencyProfile frequency_profile(std::span<const SparseLatent> latents,
                                   const std::vector<std::string>* texts = nullptr);

/// Rank-frequency series: counts sorted descending, zeros dropped.
std::vector<RankFrequency> rank_frequency(std::span<const std::uint64_t> counts);

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

/// Least-squares line through (log rank, log count) for entries with
/// count >= min_count. Needs at least two points.
PowerLawFit fit_power_law(std::span<const RankFrequency> series, std::uint64_t min_count = 1);

/// Two-column `rank count` table for plotting.
void write_rank_frequency(std::ostream& out, std::span<const RankFrequency> series);

/// Documents with a nonzero activation on `feature`, highest first, equal
/// activations in doc_id order, at most `limit` of them.
std::vector<ScoredDoc> top_activating_docs(std::uint32_t feature,
                                           std::span<const std::string> doc_ids,
                                           std::span<const SparseLatent> latents,
                                           std::size_t limit = 512);

enum class SeriesMode { raw, first_difference };

struct ActivationSeries {
  std::string doc_id;
  std::uint32_t feature = 0;
  std::vector<std::string> tokens;
  std::vector<double> activations;  // one per token prefix
};

/// Activation of `feature` on the encoded embedding of tokens[0..t] for each t.
/// Embedder failures are rethrown as ClientError naming the prefix position.
ActivationSeries activation_series(const SaeParams& params, EmbedderClient& embedder,
                                   std::span<const std::string> tokens, std::uint32_t feature,
                                   const std::string& doc_id = {},
                                   SeriesMode mode = SeriesMode::raw);

/// Activation of `feature` on the embedding of the whole token sequence.
double replay_activation(const SaeParams& params, EmbedderClient& embedder,
                         std::span<const std::string> tokens, std::uint32_t feature);

}  // namespace embscope
