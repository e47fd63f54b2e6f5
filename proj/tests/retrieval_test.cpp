// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "embscope/error.hpp"
#include "embscope/retrieval.hpp"
#include "test_support.hpp"

namespace embscope {
namespace {

// Scores every document, sorts by (score desc, doc_id asc), keeps `cutoff`.
RankedList brute_force(const std::string& qid, const std::vector<std::string>& ids,
                       const std::vector<double>& scores, std::size_t cutoff,
                       const std::vector<bool>* eligible = nullptr) {
  RankedList out{qid, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (eligible == nullptr || (*eligible)[i]) out.results.push_back({ids[i], scores[i]});
  }
  std::sort(out.results.begin(), out.results.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (out.results.size() > cutoff) out.results.resize(cutoff);
  return out;
}

EmbeddingStore random_corpus(std::mt19937_64& rng, std::size_t rows, std::size_t dim,
                             bool coarse) {
  EmbeddingStore s(dim, EmbeddingKind::document);
  std::uniform_int_distribution<int> small(-2, 2);
  std::vector<std::size_t> order(rows);
  for (std::size_t i = 0; i < rows; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (auto i : order) {
    std::vector<double> v(dim);
    for (auto& x : v) x = coarse ? small(rng) : testing::gaussian_vector(rng, 1)[0];
    s.add("doc" + std::to_string(i), v);
  }
  return s;
}

TEST(DenseRetrieve, MatchesFullSortIncludingTies) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const bool coarse = trial % 2 == 0;
    const auto corpus = random_corpus(rng, 50 + rng() % 100, 4, coarse);
    EmbeddingStore queries(4, EmbeddingKind::query);
    for (int q = 0; q < 5; ++q) queries.add("q" + std::to_string(q), testing::gaussian_vector(rng, 4));
    for (std::size_t threads : {1u, 3u}) {
      const auto runs = dense_retrieve(queries, corpus, 10, threads);
      for (std::size_t q = 0; q < queries.size(); ++q) {
        std::vector<double> scores;
        for (std::size_t r = 0; r < corpus.size(); ++r) scores.push_back(dot(queries.row(q), corpus.row(r)));
        EXPECT_EQ(runs[q], brute_force(queries.id(q), corpus.ids(), scores, 10));
      }
    }
  }
}

TEST(DenseRetrieve, RejectsBadInputs) {
  EmbeddingStore q(3, EmbeddingKind::query);
  EmbeddingStore c(4, EmbeddingKind::document);
  EXPECT_THROW(dense_retrieve(q, c, 10), InvalidArgument);
  EmbeddingStore c3(3, EmbeddingKind::document);
  EXPECT_THROW(dense_retrieve(q, c3, 0), InvalidArgument);
}

std::vector<SparseLatent> random_latents(std::mt19937_64& rng, std::size_t count, std::size_t n,
                                         std::size_t k, bool coarse) {
  std::vector<SparseLatent> out;
  std::uniform_int_distribution<int> small(-2, 3);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::uint32_t> idx(n);
    for (std::uint32_t j = 0; j < n; ++j) idx[j] = j;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<SparseEntry> e;
    for (auto j : idx) {
      const double v = coarse ? small(rng) : testing::gaussian_vector(rng, 1)[0];
      e.push_back({j, v});
    }
    out.emplace_back(n, std::move(e));
  }
  return out;
}

// Brute-force sparse scoring over all docs; only docs with a shared nonzero
// feature are eligible.
RankedList sparse_oracle(const std::vector<std::string>& ids, const std::vector<SparseLatent>& docs,
                         const SparseLatent& q, std::size_t cutoff) {
  std::vector<double> scores(ids.size(), 0.0);
  std::vector<bool> eligible(ids.size(), false);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (const auto& e : q.entries()) {
      const double a = docs[i].activation(e.index);
      if (e.activation != 0.0 && a != 0.0) {
        eligible[i] = true;
        scores[i] += e.activation * a;
      }
    }
  }
  return brute_force("q", ids, scores, cutoff, &eligible);
}

TEST(SparseRetrieve, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t docs = 1 + rng() % 1000;
    const std::size_t n = 8 + rng() % 64;
    const std::size_t k = 1 + rng() % 6;
    const bool coarse = trial % 2 == 0;
    auto latents = random_latents(rng, docs, n, k, coarse);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < docs; ++i) ids.push_back("d" + std::to_string(rng() % 1000000) + "_" + std::to_string(i));
    const auto index = build_inverted_index(ids, latents);
    for (int q = 0; q < 5; ++q) {
      const auto query = random_latents(rng, 1, n, k, coarse)[0];
      for (std::size_t cutoff : {1u, 10u, 1000u}) {
        EXPECT_EQ(sparse_retrieve(index, query, cutoff, "q"), sparse_oracle(ids, latents, query, cutoff))
            << "trial " << trial;
      }
    }
  }
}

TEST(InvertedIndex, RebuildsLatentsAndCountsPostings) {
  std::mt19937_64 rng(3);
  const auto latents = random_latents(rng, 30, 20, 4, false);
  std::vector<std::string> ids;
  for (int i = 29; i >= 0; --i) ids.push_back("doc" + std::to_string(100 + i));
  const auto index = build_inverted_index(ids, latents);
  EXPECT_TRUE(std::is_sorted(index.doc_ids().begin(), index.doc_ids().end()));
  EXPECT_EQ(index.total_postings(), 120u);
  for (std::uint32_t d = 0; d < index.doc_count(); ++d) {
    const auto original = std::find(ids.begin(), ids.end(), index.doc_ids()[d]) - ids.begin();
    EXPECT_EQ(index.latent_of(d), latents[static_cast<std::size_t>(original)]);
  }
}

TEST(InvertedIndex, RejectsInconsistentInputs) {
  std::mt19937_64 rng(4);
  auto latents = random_latents(rng, 2, 10, 2, false);
  const std::vector<std::string> dup{"a", "a"};
  EXPECT_THROW(build_inverted_index(dup, latents), InvalidArgument);
  const std::vector<std::string> one{"a"};
  EXPECT_THROW(build_inverted_index(one, latents), InvalidArgument);
  latents[1] = SparseLatent(11);
  const std::vector<std::string> two{"a", "b"};
  EXPECT_THROW(build_inverted_index(two, latents), InvalidArgument);
}

TEST(SparseRetrieve, EmptyQueryOrIndexGivesNoResults) {
  const auto index = build_inverted_index({}, {});
  EXPECT_TRUE(sparse_retrieve(index, SparseLatent(4), 10).results.empty());
}

TEST(RunFile, RoundTripsScoresExactly) {
  std::mt19937_64 rng(5);
  std::vector<RankedList> runs;
  for (int q = 0; q < 3; ++q) {
    RankedList r{"q" + std::to_string(q), {}};
    for (int d = 0; d < 4; ++d) r.results.push_back({"d" + std::to_string(d), testing::gaussian_vector(rng, 1)[0]});
    runs.push_back(r);
  }
  std::ostringstream out;
  write_run(out, runs, "tag");
  std::istringstream in(out.str());
  EXPECT_EQ(parse_run(in), runs);
  EXPECT_NE(out.str().find("q0 Q0 d0 1 "), std::string::npos);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_double(x)), x);
}

}  // namespace
}  // namespace embscope
