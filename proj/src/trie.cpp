// SPDX-License-Identifier: Apache-2.0
#include "embscope/trie.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "embscope/error.hpp"
#include "embscope/retrieval.hpp"
#include "embscope/tokenize.hpp"
#include "json.hpp"

namespace embscope {

namespace {

constexpr std::size_t kOfflineKeywords = 5;
constexpr std::size_t kMaxKeywords = 8;

std::vector<std::string> reversed_of(const std::vector<std::string>& context) {
  return {context.rbegin(), context.rend()};
}

}  // namespace

std::vector<std::string> TriePath::context() const { return {reversed.rbegin(), reversed.rend()}; }

FeatureTrie::FeatureTrie(std::uint32_t feature) : feature_(feature), nodes_(1) {}

void FeatureTrie::insert(std::span<const std::string> reversed, std::uint64_t weight,
                         double activation_sum, double activation_max, bool substituted) {
  if (reversed.empty()) throw InvalidArgument("FeatureTrie::insert: empty path");
  std::uint32_t cur = 0;
  for (const auto& tok : reversed) {
    auto it = nodes_[cur].children.find(tok);
    std::uint32_t next;
    if (it == nodes_[cur].children.end()) {
      next = static_cast<std::uint32_t>(nodes_.size());
      nodes_[cur].children.emplace(tok, next);
      TrieNode node;
      node.token = tok;
      node.activation_max = activation_max;
      nodes_.push_back(std::move(node));
    } else {
      next = it->second;
    }
    auto& node = nodes_[next];
    node.activation_max = node.count == 0 ? activation_max
                                          : std::max(node.activation_max, activation_max);
    node.count += weight;
    node.activation_sum += activation_sum;
    cur = next;
  }
  auto& leaf = nodes_[cur];
  leaf.path_activation = leaf.terminal ? std::max(leaf.path_activation, activation_max)
                                       : activation_max;
  leaf.substituted = leaf.terminal ? (leaf.substituted && substituted) : substituted;
  leaf.terminal = true;
  leaf.terminal_count += weight;
  leaf.terminal_sum += activation_sum;
}

std::uint32_t FeatureTrie::find_terminal(std::span<const std::string> reversed) const {
  std::uint32_t cur = 0;
  for (const auto& tok : reversed) {
    const auto it = nodes_[cur].children.find(tok);
    if (it == nodes_[cur].children.end()) return 0;
    cur = it->second;
  }
  return cur != 0 && nodes_[cur].terminal ? cur : 0;
}

std::vector<TriePath> FeatureTrie::terminal_paths() const {
  std::vector<TriePath> out;
  std::vector<std::string> path;
  const auto walk = [&](auto&& self, std::uint32_t idx) -> void {
    const auto& node = nodes_[idx];
    if (idx != 0 && node.terminal) out.push_back({path, idx});
    for (const auto& [tok, child] : node.children) {
      path.push_back(tok);
      self(self, child);
      path.pop_back();
    }
  };
  walk(walk, 0);
  return out;
}

FeatureTrie build_trie(std::uint32_t feature, std::span<const ActivationSeries> series_set,
                       const TrieConfig& config) {
  if (config.context_window == 0) throw InvalidArgument("build_trie: context_window must be >= 1");
  FeatureTrie trie(feature);
  trie.sample_count = series_set.size();
  double max_act = 0.0;
  for (const auto& s : series_set) {
    if (s.tokens.size() != s.activations.size()) {
      throw InvalidArgument("build_trie: series for '" + s.doc_id +
                            "' has a different length than its text");
    }
    for (double a : s.activations) max_act = std::max(max_act, a);
  }
  if (max_act <= 0.0) return trie;

  const double threshold = config.peak_threshold * max_act;
  for (const auto& s : series_set) {
    for (std::size_t t = 0; t < s.activations.size(); ++t) {
      const double a = s.activations[t];
      if (a < threshold || a <= 0.0) continue;
      const std::size_t begin = t + 1 >= config.context_window ? t + 1 - config.context_window : 0;
      std::vector<std::string> reversed;
      for (std::size_t i = t + 1; i-- > begin;) reversed.push_back(s.tokens[i]);
      trie.insert(reversed, a);
    }
  }
  return trie;
}

FeatureTrie prune_trie(const FeatureTrie& trie, const SaeParams& params,
                       EmbedderClient& embedder, const TrieConfig& config) {
  FeatureTrie out(trie.feature());
  out.sample_count = trie.sample_count;
  out.warnings = trie.warnings;
  for (const auto& path : trie.terminal_paths()) {
    const auto& leaf = trie.node(path.node);
    auto context = path.context();
    const double floor = config.keep_threshold * leaf.path_activation;
    while (context.size() > 1) {
      const std::vector<std::string> shorter(context.begin() + 1, context.end());
      if (replay_activation(params, embedder, shorter, trie.feature()) < floor) break;
      context = shorter;
    }
    out.insert(reversed_of(context), leaf.terminal_count, leaf.terminal_sum, leaf.path_activation,
               leaf.substituted);
  }
  return out;
}

CorpusCooccurrenceSource::CorpusCooccurrenceSource(
    const std::vector<std::vector<std::string>>& docs, std::size_t window) {
  for (const auto& doc : docs) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const std::size_t end = std::min(doc.size(), i + window + 1);
      for (std::size_t j = i + 1; j < end; ++j) {
        if (doc[i] == doc[j]) continue;
        ++counts_[doc[i]][doc[j]];
        ++counts_[doc[j]][doc[i]];
      }
    }
  }
}

std::vector<std::string> CorpusCooccurrenceSource::substitutes(const std::string& token,
                                                               std::size_t limit) {
  const auto it = counts_.find(token);
  if (it == counts_.end()) return {};
  std::vector<std::pair<std::string, std::uint64_t>> ranked(it->second.begin(), it->second.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && out.size() < limit; ++i) {
    out.push_back(ranked[i].first);
  }
  return out;
}

std::vector<std::string> StaticSubstituteSource::substitutes(const std::string& token,
                                                             std::size_t limit) {
  if (!available_) throw ClientError("substitute source unavailable");
  const auto it = table_.find(token);
  if (it == table_.end()) return {};
  const auto n = std::min(limit, it->second.size());
  return {it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n)};
}

FeatureTrie augment_trie(const FeatureTrie& trie, const SaeParams& params,
                         EmbedderClient& embedder, SubstituteSource& substitutes,
                         const TrieConfig& config, std::size_t substitute_limit) {
  FeatureTrie out = trie;
  if (!substitutes.available()) {
    out.warnings.push_back("substitute source unavailable; trie not augmented");
    return out;
  }
  try {
    for (const auto& path : trie.terminal_paths()) {
      const auto& leaf = trie.node(path.node);
      if (leaf.substituted) continue;
      const auto context = path.context();
      const double floor = config.keep_threshold * leaf.path_activation;
      for (const auto& sub : substitutes.substitutes(context.back(), substitute_limit)) {
        if (sub == context.back() || sub.empty()) continue;
        auto variant = context;
        variant.back() = sub;
        const auto reversed = reversed_of(variant);
        if (out.find_terminal(reversed) != 0) continue;
        const double replayed = replay_activation(params, embedder, variant, trie.feature());
        if (replayed >= floor && replayed > 0.0) out.insert(reversed, 1, replayed, replayed, true);
      }
    }
  } catch (const ClientError& e) {
    FeatureTrie unchanged = trie;
    unchanged.warnings.push_back(std::string("substitute source failed: ") + e.what());
    return unchanged;
  }
  return out;
}

const char* to_string(ExplanationSource source) {
  switch (source) {
    case ExplanationSource::llm:
      return "llm";
    case ExplanationSource::offline:
      return "offline";
    case ExplanationSource::offline_fallback:
      return "offline-fallback";
  }
  return "offline";
}

std::string serialize_trie(const FeatureTrie& trie, std::size_t max_paths) {
  auto paths = trie.terminal_paths();
  std::stable_sort(paths.begin(), paths.end(), [&](const TriePath& a, const TriePath& b) {
    return trie.node(a.node).path_activation > trie.node(b.node).path_activation;
  });
  if (paths.size() > max_paths) paths.resize(max_paths);
  std::ostringstream out;
  for (const auto& p : paths) {
    const auto& leaf = trie.node(p.node);
    out << join_tokens(p.context()) << " | count=" << leaf.terminal_count
        << " activation=" << format_double(leaf.path_activation) << '\n';
  }
  return out.str();
}

std::vector<ChatMessage> explanation_prompt(const FeatureTrie& trie) {
  return {
      {"system",
       "You label latent features of a sparse autoencoder over text embeddings. "
       "Reply with at most 8 lowercase keywords separated by commas and nothing else."},
      {"user", "Feature " + std::to_string(trie.feature()) +
                   ". Each line is a token context (the last token is the peak) that "
                   "strongly activates the feature, with its count and activation:\n" +
                   serialize_trie(trie)},
  };
}

std::vector<std::string> parse_keywords(const std::string& response) {
  std::vector<std::string> out;
  std::string normalized = response;
  std::replace(normalized.begin(), normalized.end(), '\n', ',');
  std::istringstream in(normalized);
  std::string item;
  while (std::getline(in, item, ',') && out.size() < kMaxKeywords) {
    std::string kw;
    for (unsigned char c : item) kw.push_back(static_cast<char>(std::tolower(c)));
    const auto strip = " \t\r\"'.*-";
    const auto b = kw.find_first_not_of(strip);
    if (b == std::string::npos) continue;
    kw = kw.substr(b, kw.find_last_not_of(strip) - b + 1);
    if (std::find(out.begin(), out.end(), kw) == out.end()) out.push_back(kw);
  }
  return out;
}

namespace {

FeatureExplanation offline_explanation(const FeatureTrie& trie) {
  std::map<std::string, double> weight;
  for (std::uint32_t i = 1; i <= trie.node_count(); ++i) {
    const auto& node = trie.node(i);
    weight[node.token] += node.activation_sum;
  }
  std::vector<std::pair<std::string, double>> ranked(weight.begin(), weight.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  FeatureExplanation exp;
  exp.feature = trie.feature();
  exp.samples = trie.sample_count;
  for (std::size_t i = 0; i < ranked.size() && i < kOfflineKeywords; ++i) {
    exp.keywords.push_back(ranked[i].first);
  }
  return exp;
}

std::string join_keywords(const std::vector<std::string>& keywords) {
  std::string s;
  for (const auto& k : keywords) {
    if (!s.empty()) s += ", ";
    s += k;
  }
  return s;
}

}  // namespace

FeatureExplanation explain_feature(const FeatureTrie& trie, LlmClient* llm) {
  if (trie.empty()) throw InvalidArgument("explain_feature: empty trie");
  auto exp = offline_explanation(trie);
  exp.source = ExplanationSource::offline;
  if (llm != nullptr) {
    try {
      auto keywords = parse_keywords(llm->complete(explanation_prompt(trie)));
      if (!keywords.empty()) {
        exp.keywords = std::move(keywords);
        exp.source = ExplanationSource::llm;
      } else {
        exp.source = ExplanationSource::offline_fallback;
      }
    } catch (const ClientError&) {
      exp.source = ExplanationSource::offline_fallback;
    }
  }
  exp.summary = join_keywords(exp.keywords);
  return exp;
}

void write_explanations_jsonl(std::ostream& out, std::span<const FeatureExplanation> items) {
  for (const auto& e : items) {
    nlohmann::ordered_json j;
    j["feature"] = e.feature;
    j["summary"] = e.summary;
    j["source"] = to_string(e.source);
    j["samples"] = e.samples;
    out << j.dump() << '\n';
  }
}

std::vector<FeatureExplanation> read_explanations_jsonl(std::istream& in) {
  std::vector<FeatureExplanation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FeatureExplanation e;
      e.feature = j.at("feature").get<std::uint32_t>();
      e.summary = j.at("summary").get<std::string>();
      const auto src = j.at("source").get<std::string>();
      if (src == "llm") {
        e.source = ExplanationSource::llm;
      } else if (src == "offline") {
        e.source = ExplanationSource::offline;
      } else if (src == "offline-fallback") {
        e.source = ExplanationSource::offline_fallback;
      } else {
        throw ParseError("unknown explanation source '" + src + "'", line_no);
      }
      e.samples = j.value("samples", std::size_t{0});
      std::istringstream kws(e.summary);
      std::string kw;
      while (std::getline(kws, kw, ',')) {
        const auto b = kw.find_first_not_of(' ');
        if (b != std::string::npos) e.keywords.push_back(kw.substr(b));
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("bad explanation record: ") + ex.what(), line_no);
    }
  }
  return out;
}

std::vector<FeatureExplanation> read_explanations_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_explanations_jsonl(in);
}

std::optional<FeatureExplanation> interpret_feature(
    const SaeParams& params, EmbedderClient& embedder, std::span<const std::string> doc_ids,
    std::span<const std::vector<std::string>> doc_tokens, std::span<const SparseLatent> latents,
    const InterpretJob& job, SubstituteSource* substitutes, LlmClient* llm) {
  if (doc_ids.size() != doc_tokens.size()) {
    throw InvalidArgument("interpret_feature: ids and texts differ in length");
  }
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < doc_ids.size(); ++i) row_of.emplace(doc_ids[i], i);

  std::vector<ActivationSeries> series;
  std::vector<std::vector<std::string>> contexts;
  for (const auto& hit : top_activating_docs(job.feature, doc_ids, latents, job.top_docs)) {
    const auto& tokens = doc_tokens[row_of.at(hit.doc_id)];
    if (tokens.empty()) continue;
    series.push_back(
        activation_series(params, embedder, tokens, job.feature, hit.doc_id, job.mode));
    contexts.push_back(tokens);
  }
  auto trie = build_trie(job.feature, series, job.trie);
  if (trie.empty()) return std::nullopt;
  trie = prune_trie(trie, params, embedder, job.trie);
  if (substitutes != nullptr) {
    trie = augment_trie(trie, params, embedder, *substitutes, job.trie);
  } else {
    CorpusCooccurrenceSource source(contexts, job.trie.context_window);
    trie = augment_trie(trie, params, embedder, source, job.trie);
  }
  return explain_feature(trie, llm);
}

}  // namespace embscope
