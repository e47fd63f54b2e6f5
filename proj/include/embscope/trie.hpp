// SPDX-License-Identifier: Apache-2.0
//
// Context tries for explaining one latent feature. A path runs from the peak
// token backwards through its preceding context; the activation at a
// position is the feature's activation on the embedding of the prefix that
// ends there.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "embscope/clients.hpp"
#include "embscope/interpret.hpp"
#include "embscope/sae.hpp"

namespace embscope {

struct TrieConfig {
  double peak_threshold = 0.5;  // fraction of the feature's max activation
  double keep_threshold = 0.8;  // fraction of a path's activation that must survive edits
  std::size_t context_window = 8;
};

struct TrieNode {
  std::string token;
  std::map<std::string, std::uint32_t> children;
  std::uint64_t count = 0;  // windows passing through this node
  double activation_sum = 0.0;
  double activation_max = 0.0;
  // Set when a window ends here.
  bool terminal = false;
  std::uint64_t terminal_count = 0;
  double terminal_sum = 0.0;
  double path_activation = 0.0;  // max activation recorded for this path
  bool substituted = false;      // path added by augment_trie

  bool operator==(const TrieNode&) const = default;
};

struct TriePath {
  std::vector<std::string> reversed;  // peak token first
  std::uint32_t node;

  /// Tokens in reading order (peak token last).
  std::vector<std::string> context() const;
};

class FeatureTrie {
 public:
  explicit FeatureTrie(std::uint32_t feature = 0);

  std::uint32_t feature() const noexcept { return feature_; }
  bool empty() const noexcept { return nodes_.size() == 1; }
  /// Number of nodes excluding the root.
  std::size_t node_count() const noexcept { return nodes_.size() - 1; }
  const TrieNode& root() const { return nodes_.front(); }
  const TrieNode& node(std::uint32_t i) const { return nodes_.at(i); }

  /// Adds a window of `weight` occurrences whose activations sum to
  /// `activation_sum` and peak at `activation_max`.
  void insert(std::span<const std::string> reversed, std::uint64_t weight, double activation_sum,
              double activation_max, bool substituted = false);
  void insert(std::span<const std::string> reversed, double activation) {
    insert(reversed, 1, activation, activation);
  }
  /// Node index of a path ending in a terminal, or 0 when absent.
  std::uint32_t find_terminal(std::span<const std::string> reversed) const;
  /// Terminal paths in depth-first, token order.
  std::vector<TriePath> terminal_paths() const;

  std::size_t sample_count = 0;  // activation series the trie was built from
  std::vector<std::string> warnings;

  bool same_structure(const FeatureTrie& other) const { return nodes_ == other.nodes_; }
  bool operator==(const FeatureTrie&) const = default;

 private:
  std::uint32_t feature_;
  std::vector<TrieNode> nodes_;
};

/// Inserts every peak window (activation >= peak_threshold * max over the
/// set). An empty set, or one with no positive activation, gives an empty trie.
FeatureTrie build_trie(std::uint32_t feature, std::span<const ActivationSeries> series_set,
                       const TrieConfig& config = {});

/// Shortens each path from its oldest token while the replayed activation
/// stays >= keep_threshold * the path activation, merging paths that collide.
FeatureTrie prune_trie(const FeatureTrie& trie, const SaeParams& params,
                       EmbedderClient& embedder, const TrieConfig& config = {});

class SubstituteSource {
 public:
  virtual ~SubstituteSource() = default;
  virtual bool available() const { return true; }
  /// Up to `limit` candidate replacements for `token`. May throw ClientError.
  virtual std::vector<std::string> substitutes(const std::string& token, std::size_t limit) = 0;
};

/// Candidates are the tokens co-occurring most often with the given token
/// within `window` positions in the supplied documents.
class CorpusCooccurrenceSource final : public SubstituteSource {
 public:
  CorpusCooccurrenceSource(const std::vector<std::vector<std::string>>& docs,
                           std::size_t window = 8);
  std::vector<std::string> substitutes(const std::string& token, std::size_t limit) override;

 private:
  std::unordered_map<std::string, std::map<std::string, std::uint64_t>> counts_;
};

/// Fixed token -> candidates table.
class StaticSubstituteSource final : public SubstituteSource {
 public:
  explicit StaticSubstituteSource(std::map<std::string, std::vector<std::string>> table,
                                  bool available = true)
      : table_(std::move(table)), available_(available) {}
  bool available() const override { return available_; }
  std::vector<std::string> substitutes(const std::string& token, std::size_t limit) override;

 private:
  std::map<std::string, std::vector<std::string>> table_;
  bool available_;
};

/// Adds sibling branches that swap each original path's peak token for a
/// substitute whose replayed activation is >= keep_threshold * the path
/// activation. An unavailable source leaves the trie as is plus a warning.
FeatureTrie augment_trie(const FeatureTrie& trie, const SaeParams& params,
                         EmbedderClient& embedder, SubstituteSource& substitutes,
                         const TrieConfig& config = {}, std::size_t substitute_limit = 8);

enum class ExplanationSource { llm, offline, offline_fallback };
const char* to_string(ExplanationSource source);

struct FeatureExplanation {
  std::uint32_t feature = 0;
  std::vector<std::string> keywords;
  std::string summary;  // keywords joined by ", "
  ExplanationSource source = ExplanationSource::offline;
  std::size_t samples = 0;
};

/// Text form of a trie sent to the LLM: one context per line with its
/// count and activation, strongest first.
std::string serialize_trie(const FeatureTrie& trie, std::size_t max_paths = 64);
std::vector<ChatMessage> explanation_prompt(const FeatureTrie& trie);
/// Comma-separated keywords, lowercased and deduplicated, at most 8.
std::vector<std::string> parse_keywords(const std::string& response);

/// Top-5 tokens by activation-weighted count when `llm` is null; otherwise
/// asks the LLM and falls back to the offline answer on any failure.
FeatureExplanation explain_feature(const FeatureTrie& trie, LlmClient* llm = nullptr);

void write_explanations_jsonl(std::ostream& out, std::span<const FeatureExplanation> items);
std::vector<FeatureExplanation> read_explanations_jsonl(std::istream& in);
std::vector<FeatureExplanation> read_explanations_jsonl(const std::filesystem::path& path);

struct InterpretJob {
  std::uint32_t feature = 0;
  std::size_t top_docs = 512;
  TrieConfig trie;
  SeriesMode mode = SeriesMode::raw;
};

/// Full chain for one feature: top-activating docs, prefix series, trie
/// build, prune, augment and explanation. Empty when no document produces a
/// peak. Without a substitute source, co-occurrence in the top documents is used.
std::optional<FeatureExplanation> interpret_feature(const SaeParams& params, EmbedderClient& embedder,
                                     std::span<const std::string> doc_ids,
                                     std::span<const std::vector<std::string>> doc_tokens,
                                     std::span<const SparseLatent> latents,
                                     const InterpretJob& job, SubstituteSource* substitutes,
                                     LlmClient* llm);

}  // namespace embscope
