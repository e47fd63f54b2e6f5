// SPDX-License-Identifier: Apache-2.0
#include "embscope/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "embscope/error.hpp"
#include "embscope/tokenize.hpp"

namespace embscope {

namespace {

constexpr std::size_t kEmbedChunk = 32;

}  // namespace

std::vector<RankFrequency> rank_frequency(std::span<const std::uint64_t> counts) {
  std::vector<std::uint64_t> sorted;
  for (auto c : counts) {
    if (c > 0) sorted.push_back(c);
  }
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::vector<RankFrequency> series;
  series.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) series.push_back({i + 1, sorted[i]});
  return series;
}

FrequencyProfile frequency_profile(std::span<const SparseLatent> latents,
                                   const std::vector<std::string>* texts) {
  if (latents.empty()) throw InvalidArgument("frequency_profile: empty corpus");
  FrequencyProfile profile;
  const std::size_t n = latents.front().latent_dim();
  profile.feature_counts.assign(n, 0);
  for (const auto& latent : latents) {
    if (latent.latent_dim() != n) {
      throw InvalidArgument("frequency_profile: latents disagree on latent_dim");
    }
    for (const auto& e : latent.entries()) {
      if (e.activation == 0.0) continue;
      ++profile.feature_counts[e.index];
      ++profile.total_nnz;
    }
  }
  profile.feature_series = rank_frequency(profile.feature_counts);

  if (texts != nullptr) {
    for (const auto& text : *texts) {
      for (auto& tok : tokenize(text)) ++profile.unigram_counts[std::move(tok)];
    }
    std::vector<std::uint64_t> counts;
    counts.reserve(profile.unigram_counts.size());
    for (const auto& [tok, c] : profile.unigram_counts) counts.push_back(c);
    profile.unigram_series = rank_frequency(counts);
  }
  return profile;
}

PowerLawFit fit_power_law(std::span<const RankFrequency> series, std::uint64_t min_count) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t m = 0;
  for (const auto& p : series) {
    if (p.count < std::max<std::uint64_t>(min_count, 1)) continue;
    const double x = std::log(static_cast<double>(p.rank));
    const double y = std::log(static_cast<double>(p.count));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m < 2) throw InvalidArgument("fit_power_law: need at least two points");
  const double md = static_cast<double>(m);
  const double denom = md * sxx - sx * sx;
  if (denom == 0.0) throw InvalidArgument("fit_power_law: ranks are all equal");
  PowerLawFit fit;
  fit.slope = (md * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / md;
  fit.points = m;
  return fit;
}

void write_rank_frequency(std::ostream& out, std::span<const RankFrequency> series) {
  out << "# rank count\n";
  for (const auto& p : series) out << p.rank << ' ' << p.count << '\n';
}

std::vector<ScoredDoc> top_activating_docs(std::uint32_t feature,
                                           std::span<const std::string> doc_ids,
                                           std::span<const SparseLatent> latents,
                                           std::size_t limit) {
  if (doc_ids.size() != latents.size()) {
    throw InvalidArgument("top_activating_docs: ids and latents differ in length");
  }
  for (const auto& latent : latents) {
    if (feature >= latent.latent_dim()) {
      throw InvalidArgument("top_activating_docs: feature " + std::to_string(feature) +
                            " out of range");
    }
  }
  std::vector<ScoredDoc> hits;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const double a = latents[i].activation(feature);
    if (a != 0.0) hits.push_back({doc_ids[i], a});
  }
  const auto keep = std::min(limit, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    [](const ScoredDoc& a, const ScoredDoc& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.doc_id < b.doc_id;
                    });
  hits.resize(keep);
  return hits;
}

ActivationSeries activation_series(const SaeParams& params, EmbedderClient& embedder,
                                   std::span<const std::string> tokens, std::uint32_t feature,
                                   const std::string& doc_id, SeriesMode mode) {
  if (tokens.empty()) throw InvalidArgument("activation_series: empty text");
  if (feature >= params.latent_dim) {
    throw InvalidArgument("activation_series: feature " + std::to_string(feature) +
                          " out of range");
  }
  if (embedder.dim() != params.input_dim) {
    throw InvalidArgument("activation_series: embedder dimension does not match the model");
  }
  ActivationSeries series;
  series.doc_id = doc_id;
  series.feature = feature;
  series.tokens.assign(tokens.begin(), tokens.end());
  series.activations.reserve(tokens.size());

  std::string prefix;
  for (std::size_t begin = 0; begin < tokens.size(); begin += kEmbedChunk) {
    const auto end = std::min(tokens.size(), begin + kEmbedChunk);
    std::vector<std::string> prefixes;
    for (std::size_t t = begin; t < end; ++t) {
      if (!prefix.empty()) prefix += ' ';
      prefix += tokens[t];
      prefixes.push_back(prefix);
    }
    std::vector<std::vector<double>> embeddings;
    try {
      embeddings = embedder.embed(prefixes);
      if (embeddings.size() != prefixes.size()) throw ClientError("wrong number of embeddings");
    } catch (const ClientError& e) {
      throw ClientError("embedding prefix " + std::to_string(begin + 1) + ".." +
                        std::to_string(end) + " of '" + doc_id + "' failed: " + e.what());
    }
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      if (embeddings[i].size() != params.input_dim) {
        throw ClientError("embedding prefix " + std::to_string(begin + i + 1) + " of '" +
                          doc_id + "' has the wrong dimension");
      }
      series.activations.push_back(encode(params, embeddings[i]).activation(feature));
    }
  }
  if (mode == SeriesMode::first_difference) {
    for (std::size_t t = series.activations.size(); t-- > 1;) {
      series.activations[t] -= series.activations[t - 1];
    }
  }
  return series;
}

double replay_activation(const SaeParams& params, EmbedderClient& embedder,
                         std::span<const std::string> tokens, std::uint32_t feature) {
  const auto emb = embedder.embed({join_tokens(tokens)});
  if (emb.size() != 1 || emb[0].size() != params.input_dim) {
    throw ClientError("replay: embedder returned an unexpected shape");
  }
  return encode(params, emb[0]).activation(feature);
}

}  // namespace embscope
