// SPDX-License-Identifier: Apache-2.0
#include "embscope/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "embscope/error.hpp"
#include "embscope/fidelity.hpp"
#include "embscope/retrieval.hpp"
#include "embscope/tokenize.hpp"
#include "json.hpp"

namespace embscope {

SparseLatent amplify(const SparseLatent& latent, std::uint32_t feature, double delta) {
  if (feature >= latent.latent_dim()) {
    throw InvalidArgument("amplify: feature " + std::to_string(feature) + " out of range for " +
                          std::to_string(latent.latent_dim()) + " features");
  }
  if (!std::isfinite(delta)) throw InvalidArgument("amplify: delta must be finite");
  auto entries = latent.entries();
  const auto it = std::lower_bound(
      entries.begin(), entries.end(), feature,
      [](const SparseEntry& e, std::uint32_t f) { return e.index < f; });
  if (it != entries.end() && it->index == feature) {
    it->activation += delta;
  } else {
    entries.insert(it, SparseEntry{feature, delta});
  }
  return SparseLatent(latent.latent_dim(), std::move(entries));
}

std::optional<std::uint32_t> argmax_feature(const SparseLatent& latent) {
  std::optional<std::uint32_t> best;
  double best_value = 0.0;
  for (const auto& e : latent.entries()) {
    if (!best || e.activation > best_value) {
      best = e.index;
      best_value = e.activation;
    }
  }
  return best;
}

namespace {

void check_alignment(const EmbeddingStore& store, const std::vector<SparseLatent>& latents,
                     const char* what) {
  if (store.size() != latents.size()) {
    throw InvalidArgument(std::string(what) + ": latent count differs from store size");
  }
}

// Corpus rows of the relevant documents of a query; throws when one is missing.
std::vector<std::size_t> relevant_rows(const QrelSet& qrels, const std::string& qid,
                                       const EmbeddingStore& corpus) {
  std::vector<std::size_t> rows;
  for (const auto& doc : qrels.relevant(qid)) {
    const auto row = corpus.find(doc);
    if (!row) throw InvalidArgument("relevant doc '" + doc + "' of '" + qid + "' not in corpus");
    rows.push_back(*row);
  }
  return rows;
}

}  // namespace

DocumentEdits document_edits(const SaeParams& params, const std::string& query_id,
                             const SparseLatent& query_latent, const EmbeddingStore& corpus,
                             const std::vector<SparseLatent>& corpus_latents,
                             const QrelSet& qrels, double delta) {
  check_alignment(corpus, corpus_latents, "manipulate_documents");
  DocumentEdits edits;
  edits.target = argmax_feature(query_latent);
  if (!edits.target || !qrels.contains(query_id)) return edits;
  edits.rows = relevant_rows(qrels, query_id, corpus);
  for (auto row : edits.rows) {
    edits.embeddings.push_back(decode(params, amplify(corpus_latents[row], *edits.target, delta)));
  }
  return edits;
}

EmbeddingStore manipulate_documents(const SaeParams& params, const std::string& query_id,
                                    const SparseLatent& query_latent,
                                    const EmbeddingStore& corpus,
                                    const std::vector<SparseLatent>& corpus_latents,
                                    const QrelSet& qrels, double delta) {
  auto edited = corpus_latents;
  const auto edits =
      document_edits(params, query_id, query_latent, corpus, corpus_latents, qrels, delta);
  for (auto row : edits.rows) edited[row] = amplify(edited[row], *edits.target, delta);
  return decode_store(params, corpus, edited);
}

ManipulationResult manipulate_queries(const SaeParams& params, const EmbeddingStore& queries,
                                      const std::vector<SparseLatent>& query_latents,
                                      const EmbeddingStore& corpus,
                                      const std::vector<SparseLatent>& corpus_latents,
                                      const QrelSet& qrels, double delta,
                                      Aggregation aggregation) {
  check_alignment(queries, query_latents, "manipulate_queries");
  check_alignment(corpus, corpus_latents, "manipulate_queries");
  ManipulationResult result;
  std::vector<SparseLatent> edited = query_latents;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& qid = queries.id(q);
    if (!qrels.contains(qid)) continue;
    const auto rows = relevant_rows(qrels, qid, corpus);
    struct Pool {
      double value = 0.0;
      std::size_t present = 0;
    };
    std::map<std::uint32_t, Pool> pooled;
    for (auto row : rows) {
      for (const auto& e : corpus_latents[row].entries()) {
        auto& p = pooled[e.index];
        p.value = p.present == 0 || aggregation == Aggregation::mean
                      ? p.value + e.activation
                      : std::max(p.value, e.activation);
        ++p.present;
      }
    }
    std::optional<std::uint32_t> target;
    double best = 0.0;
    for (const auto& [f, p] : pooled) {
      // Documents lacking the feature contribute an activation of 0.
      double value = p.value;
      if (aggregation == Aggregation::mean) {
        value /= static_cast<double>(rows.size());
      } else if (p.present < rows.size()) {
        value = std::max(value, 0.0);
      }
      if (!target || value > best) {
        target = f;
        best = value;
      }
    }
    if (!target) {
      result.skipped.push_back(qid);
      continue;
    }
    result.targets.emplace(qid, *target);
    edited[q] = amplify(edited[q], *target, delta);
  }
  result.store = decode_store(params, queries, edited);
  return result;
}

const char* to_string(Pipeline pipeline) {
  return pipeline == Pipeline::document ? "document" : "query";
}

GridSearchResult amplification_grid_search(const SaeParams& params, Pipeline pipeline,
                                           const EmbeddingStore& queries,
                                           const EmbeddingStore& corpus, const QrelSet& qrels,
                                           const GridSearchConfig& config) {
  if (config.steps == 0) throw InvalidArgument("grid search: steps must be >= 1");
  if (!(config.start > 0.0) || !std::isfinite(config.start)) {
    throw InvalidArgument("grid search: start must be positive and finite");
  }
  const auto judged = judged_queries(queries, qrels);
  if (judged.empty()) throw InvalidArgument("grid search: no query has qrels");
  const auto depth = std::max<std::size_t>(config.cutoff, 10);

  const auto query_latents = encode_store(params, judged, config.threads);
  const auto corpus_latents = encode_store(params, corpus, config.threads);
  const auto query_hat = decode_store(params, judged, query_latents);
  const auto corpus_hat = decode_store(params, corpus, corpus_latents);

  GridSearchResult result;
  result.pipeline = pipeline;
  result.baseline = compute_metrics(dense_retrieve(query_hat, corpus_hat, depth, config.threads),
                                    qrels, config.cutoff);
  // Document side: one base score row per query; only the edited rows change.
  const auto doc_rank = lexical_ranks(corpus.ids());
  std::vector<std::vector<double>> base_scores;
  if (pipeline == Pipeline::document) {
    base_scores.resize(judged.size());
    parallel_chunks(judged.size(), config.threads, [&](std::size_t b, std::size_t e, std::size_t) {
      for (std::size_t q = b; q < e; ++q) {
        base_scores[q].resize(corpus_hat.size());
        for (std::size_t d = 0; d < corpus_hat.size(); ++d) {
          base_scores[q][d] = dot(query_hat.row(q), corpus_hat.row(d));
        }
      }
    });
  }

  double level = config.start;
  for (std::size_t step = 0; step < config.steps; ++step, level *= 2.0) {
    std::vector<RankedList> runs;
    if (pipeline == Pipeline::document) {
      runs.resize(judged.size());
      std::vector<char> skipped(judged.size(), 0);
      parallel_chunks(judged.size(), config.threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t q = b; q < e; ++q) {
          const auto edits = document_edits(params, judged.id(q), query_latents[q], corpus,
                                            corpus_latents, qrels, level);
          auto scores = base_scores[q];
          for (std::size_t i = 0; i < edits.rows.size(); ++i) {
            scores[edits.rows[i]] = dot(query_hat.row(q), edits.embeddings[i].span());
          }
          skipped[q] = edits.rows.empty();
          runs[q] = rank_scores(judged.id(q), scores, corpus.ids(), doc_rank, depth);
        }
      });
      result.skipped_queries = static_cast<std::size_t>(std::count(skipped.begin(), skipped.end(), 1));
    } else {
      auto m = manipulate_queries(params, judged, query_latents, corpus, corpus_latents, qrels,
                                  level, config.aggregation);
      runs = dense_retrieve(m.store, corpus_hat, depth, config.threads);
      result.skipped_queries = m.skipped.size();
    }
    result.levels.push_back({level, compute_metrics(runs, qrels, config.cutoff)});
  }
  return result;
}

void write_grid_jsonl(std::ostream& out, const GridSearchResult& result) {
  for (const auto& l : result.levels) {
    nlohmann::ordered_json j;
    j["pipeline"] = to_string(result.pipeline);
    j["level"] = l.level;
    j["mrr"] = l.metrics.mrr;
    j["p10"] = l.metrics.p_at_10;
    j["r10"] = l.metrics.r_at_10;
    out << j.dump() << '\n';
  }
}

void write_grid_csv(std::ostream& out, const GridSearchResult& result) {
  out << "level,mrr,p10,r10\n";
  for (const auto& l : result.levels) {
    out << format_double(l.level) << ',' << format_double(l.metrics.mrr) << ','
        << format_double(l.metrics.p_at_10) << ',' << format_double(l.metrics.r_at_10) << '\n';
  }
}

KeywordLabeler::KeywordLabeler(std::map<std::uint32_t, std::vector<std::string>> keywords,
                               const std::unordered_map<std::string, std::string>& doc_texts)
    : keywords_(std::move(keywords)) {
  for (auto& [f, kws] : keywords_) {
    std::vector<std::string> normalized;
    for (const auto& kw : kws) {
      for (auto& t : tokenize(kw)) normalized.push_back(std::move(t));
    }
    kws = std::move(normalized);
  }
  for (const auto& [id, text] : doc_texts) {
    auto tokens = tokenize(text);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    doc_tokens_.emplace(id, std::move(tokens));
  }
}

std::optional<bool> KeywordLabeler::related(const std::string& doc_id,
                                            std::uint32_t feature) const {
  const auto kw = keywords_.find(feature);
  const auto doc = doc_tokens_.find(doc_id);
  if (kw == keywords_.end() || kw->second.empty() || doc == doc_tokens_.end()) {
    return std::nullopt;
  }
  for (const auto& k : kw->second) {
    if (std::binary_search(doc->second.begin(), doc->second.end(), k)) return true;
  }
  return false;
}

AnnotationLabeler AnnotationLabeler::from_stream(std::istream& in) {
  std::map<std::pair<std::uint32_t, std::string>, bool> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream fields(line);
    long long feature = -1;
    std::string doc, extra;
    int label = -1;
    if (!(fields >> feature >> doc >> label) || (fields >> extra) || feature < 0 ||
        (label != 0 && label != 1)) {
      throw ParseError("annotation line must be `feature doc_id 0|1`", line_no);
    }
    labels[{static_cast<std::uint32_t>(feature), doc}] = label == 1;
  }
  return AnnotationLabeler(std::move(labels));
}

AnnotationLabeler AnnotationLabeler::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return from_stream(in);
}

std::optional<bool> AnnotationLabeler::related(const std::string& doc_id,
                                               std::uint32_t feature) const {
  const auto it = labels_.find({feature, doc_id});
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

std::string make_snippet(const std::string& text, std::size_t max_chars) {
  if (text.size() <= max_chars) return text;
  auto cut = text.rfind(' ', max_chars);
  if (cut == std::string::npos || cut == 0) cut = max_chars;
  return text.substr(0, cut) + "...";
}

namespace {

PerspectiveOutcome score_outcome(const PerspectiveInputs& in, const std::string& query_id,
                                 std::uint32_t feature, std::size_t cutoff,
                                 const RankedList& before, const RankedList& after) {
  PerspectiveOutcome out;
  out.query_id = query_id;
  out.feature = feature;
  out.cutoff = cutoff;
  if (in.feature_summaries != nullptr) {
    if (const auto it = in.feature_summaries->find(feature); it != in.feature_summaries->end()) {
      out.summary = it->second;
    }
  }
  for (const auto& r : before.results) out.before_docs.push_back(r.doc_id);
  for (const auto& r : after.results) {
    out.after_docs.push_back(r.doc_id);
    if (in.doc_texts != nullptr) {
      const auto it = in.doc_texts->find(r.doc_id);
      out.snippets.push_back(it == in.doc_texts->end() ? std::string{} : make_snippet(it->second));
    }
  }
  const auto count = [&](const std::vector<std::string>& docs) -> std::optional<std::size_t> {
    std::size_t n = 0;
    for (const auto& d : docs) {
      const auto label = in.labeler->related(d, feature);
      if (!label) return std::nullopt;
      n += *label;
    }
    return n;
  };
  out.before = count(out.before_docs);
  out.after = count(out.after_docs);
  if (!out.before || !out.after) {
    out.labeled = false;
    out.before.reset();
    out.after.reset();
  }
  return out;
}

}  // namespace

std::pair<PerspectiveOutcome, PerspectiveOutcome> perspective_experiment(
    const PerspectiveInputs& inputs, const std::string& query_id, std::span<const double> query,
    std::uint32_t feature_a, std::uint32_t feature_b, double delta, std::size_t cutoff) {
  if (inputs.params == nullptr || inputs.reconstructed_corpus == nullptr ||
      inputs.labeler == nullptr) {
    throw InvalidArgument("perspective_experiment: params, corpus and labeler are required");
  }
  if (feature_a == feature_b) throw InvalidArgument("perspective_experiment: features must differ");
  const auto& params = *inputs.params;
  const auto& corpus = *inputs.reconstructed_corpus;
  const auto rank = lexical_ranks(corpus.ids());
  const auto h = encode(params, query);
  const auto plain = decode(params, h);
  const auto before = dense_retrieve_one(query_id, plain.span(), corpus, rank, cutoff);
  const auto run_for = [&](std::uint32_t f) {
    const auto steered = decode(params, amplify(h, f, delta));
    return dense_retrieve_one(query_id, steered.span(), corpus, rank, cutoff);
  };
  return {score_outcome(inputs, query_id, feature_a, cutoff, before, run_for(feature_a)),
          score_outcome(inputs, query_id, feature_b, cutoff, before, run_for(feature_b))};
}

std::string perspective_to_json(const PerspectiveOutcome& o) {
  nlohmann::ordered_json j;
  j["query"] = o.query_id;
  j["feature"] = o.feature;
  j["summary"] = o.summary;
  j["cutoff"] = o.cutoff;
  j["labeled"] = o.labeled;
  j["before"] = o.before ? nlohmann::ordered_json(*o.before) : nlohmann::ordered_json(nullptr);
  j["after"] = o.after ? nlohmann::ordered_json(*o.after) : nlohmann::ordered_json(nullptr);
  j["before_docs"] = o.before_docs;
  j["after_docs"] = o.after_docs;
  j["snippets"] = o.snippets;
  return j.dump();
}

}  // namespace embscope
