// SPDX-License-Identifier: Apache-2.0
#include "embscope/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "embscope/error.hpp"

namespace embscope {

namespace {

struct Candidate {
  std::uint32_t doc;
  double score;
};

// Keeps the best `cutoff` candidates in rank order (score desc, then rank asc).
void select_top(std::vector<Candidate>& cands, std::span<const std::uint32_t> doc_rank,
                std::size_t cutoff) {
  const auto better = [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return doc_rank[a.doc] < doc_rank[b.doc];
  };
  const auto keep = std::min(cutoff, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                    cands.end(), better);
  cands.resize(keep);
}

}  // namespace

std::vector<std::uint32_t> lexical_ranks(const std::vector<std::string>& ids) {
  std::vector<std::uint32_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });
  std::vector<std::uint32_t> rank(ids.size());
  for (std::uint32_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

RankedList rank_scores(const std::string& query_id, std::span<const double> scores,
                       const std::vector<std::string>& doc_ids,
                       std::span<const std::uint32_t> doc_rank, std::size_t cutoff) {
  if (cutoff == 0) throw InvalidArgument("retrieval: cutoff must be >= 1");
  if (scores.size() != doc_ids.size() || doc_rank.size() != doc_ids.size()) {
    throw InvalidArgument("rank_scores: scores, ids and ranks differ in length");
  }
  std::vector<Candidate> cands(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    cands[i] = {static_cast<std::uint32_t>(i), scores[i]};
  }
  select_top(cands, doc_rank, cutoff);
  RankedList list{query_id, {}};
  list.results.reserve(cands.size());
  for (const auto& c : cands) list.results.push_back({doc_ids[c.doc], c.score});
  return list;
}

RankedList dense_retrieve_one(const std::string& query_id, std::span<const double> query,
                              const EmbeddingStore& corpus,
                              std::span<const std::uint32_t> doc_rank, std::size_t cutoff) {
  if (cutoff == 0) throw InvalidArgument("dense_retrieve: cutoff must be >= 1");
  if (query.size() != corpus.dim()) {
    throw InvalidArgument("dense_retrieve: query dimension " + std::to_string(query.size()) +
                          " != corpus dimension " + std::to_string(corpus.dim()));
  }
  std::vector<double> scores(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) scores[i] = dot(query, corpus.row(i));
  return rank_scores(query_id, scores, corpus.ids(), doc_rank, cutoff);
}

std::vector<RankedList> dense_retrieve(const EmbeddingStore& queries,
                                       const EmbeddingStore& corpus, std::size_t cutoff,
                                       std::size_t threads) {
  if (cutoff == 0) throw InvalidArgument("dense_retrieve: cutoff must be >= 1");
  if (queries.dim() != corpus.dim()) {
    throw InvalidArgument("dense_retrieve: query dimension " + std::to_string(queries.dim()) +
                          " != corpus dimension " + std::to_string(corpus.dim()));
  }
  const auto rank = lexical_ranks(corpus.ids());
  std::vector<RankedList> runs(queries.size());
  parallel_chunks(queries.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t q = begin; q < end; ++q) {
      runs[q] = dense_retrieve_one(queries.id(q), queries.row(q), corpus, rank, cutoff);
    }
  });
  return runs;
}

SparseLatent InvertedIndex::latent_of(std::uint32_t doc) const {
  if (doc >= doc_ids_.size()) throw InvalidArgument("latent_of: document out of range");
  std::vector<SparseEntry> entries;
  for (std::uint32_t f = 0; f < postings_.size(); ++f) {
    const auto& list = postings_[f];
    const auto it = std::lower_bound(list.begin(), list.end(), doc,
                                     [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    if (it != list.end() && it->doc == doc) entries.push_back({f, it->activation});
  }
  return SparseLatent(postings_.size(), std::move(entries));
}

InvertedIndex build_inverted_index(std::span<const std::string> doc_ids,
                                   std::span<const SparseLatent> latents) {
  if (doc_ids.size() != latents.size()) {
    throw InvalidArgument("build_inverted_index: ids and latents differ in length");
  }
  InvertedIndex index;
  if (latents.empty()) return index;

  const std::size_t n = latents.front().latent_dim();
  std::vector<std::string> ids(doc_ids.begin(), doc_ids.end());
  std::vector<std::uint32_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (ids[order[i]] == ids[order[i - 1]]) {
      throw InvalidArgument("build_inverted_index: duplicate doc id '" + ids[order[i]] + "'");
    }
  }

  index.postings_.assign(n, {});
  index.doc_nnz_.assign(ids.size(), 0);
  index.doc_ids_.reserve(ids.size());
  for (std::uint32_t pos = 0; pos < order.size(); ++pos) {
    const auto& latent = latents[order[pos]];
    if (latent.latent_dim() != n) {
      throw InvalidArgument("build_inverted_index: latent_dim " +
                            std::to_string(latent.latent_dim()) + " != " + std::to_string(n));
    }
    index.doc_ids_.push_back(ids[order[pos]]);
    for (const auto& e : latent.entries()) {
      if (e.activation == 0.0) continue;
      index.postings_[e.index].push_back({pos, e.activation});
      ++index.doc_nnz_[pos];
      ++index.total_postings_;
    }
  }
  return index;
}

RankedList sparse_retrieve(const InvertedIndex& index, const SparseLatent& query_latent,
                           std::size_t cutoff, const std::string& query_id) {
  if (cutoff == 0) throw InvalidArgument("sparse_retrieve: cutoff must be >= 1");
  RankedList list{query_id, {}};
  if (index.doc_count() == 0) return list;
  if (query_latent.latent_dim() != index.latent_dim()) {
    throw InvalidArgument("sparse_retrieve: query latent_dim " +
                          std::to_string(query_latent.latent_dim()) + " != index latent_dim " +
                          std::to_string(index.latent_dim()));
  }

  std::vector<double> acc(index.doc_count(), 0.0);
  std::vector<char> seen(index.doc_count(), 0);
  std::vector<Candidate> cands;
  for (const auto& e : query_latent.entries()) {
    if (e.activation == 0.0) continue;
    for (const auto& p : index.postings(e.index)) {
      if (!seen[p.doc]) {
        seen[p.doc] = 1;
        cands.push_back({p.doc, 0.0});
      }
      acc[p.doc] += e.activation * p.activation;
    }
  }
  for (auto& c : cands) c.score = acc[c.doc];
  // Documents are numbered in doc_id order, so the number is its own rank.
  std::vector<std::uint32_t> identity(index.doc_count());
  std::iota(identity.begin(), identity.end(), 0u);
  select_top(cands, identity, cutoff);
  list.results.reserve(cands.size());
  for (const auto& c : cands) list.results.push_back({index.doc_ids()[c.doc], c.score});
  return list;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_run(std::ostream& out, std::span<const RankedList> runs, const std::string& tag) {
  if (tag.empty() || tag.find_first_of(" \t\n") != std::string::npos) {
    throw InvalidArgument("write_run: run tag must be a single non-empty token");
  }
  for (const auto& run : runs) {
    for (std::size_t r = 0; r < run.results.size(); ++r) {
      out << run.query_id << " Q0 " << run.results[r].doc_id << ' ' << (r + 1) << ' '
          << format_double(run.results[r].score) << ' ' << tag << '\n';
    }
  }
}

void write_run(const std::filesystem::path& path, std::span<const RankedList> runs,
               const std::string& tag) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_run(out, runs, tag);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<RankedList> parse_run(std::istream& in) {
  std::vector<RankedList> runs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string qid, q0, doc, rank_s, score_s, tag, extra;
    if (!(fields >> qid >> q0 >> doc >> rank_s >> score_s >> tag) || (fields >> extra)) {
      throw ParseError("run line must have 6 fields", line_no);
    }
    double score = 0.0;
    const auto res = std::from_chars(score_s.data(), score_s.data() + score_s.size(), score);
    if (res.ec != std::errc{} || res.ptr != score_s.data() + score_s.size()) {
      throw ParseError("bad score '" + score_s + "'", line_no);
    }
    if (runs.empty() || runs.back().query_id != qid) runs.push_back({qid, {}});
    runs.back().results.push_back({doc, score});
  }
  return runs;
}

}  // namespace embscope
