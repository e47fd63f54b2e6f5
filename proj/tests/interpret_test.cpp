// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <sstream>
#include <thread>

#include "embscope/clients.hpp"
#include "embscope/error.hpp"
#include "embscope/interpret.hpp"
#include "embscope/synthetic.hpp"
#include "embscope/tokenize.hpp"
#include "test_support.hpp"

#include "httplib.h"
#include "json.hpp"

namespace embscope {
namespace {

SaeParams identity_params(std::size_t d, std::size_t k) {
  SaeParams p(d, d, k);
  for (std::size_t i = 0; i < d; ++i) {
    p.encoder(i, i) = 1.0;
    p.decoder(i, i) = 1.0;
  }
  return p;
}

TEST(Tokenize, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(tokenize("Hello, World!  it's  --  OK"),
            (std::vector<std::string>{"hello", "world", "its", "ok"}));
  EXPECT_TRUE(tokenize("  ... ").empty());
  const std::vector<std::string> t{"a", "b"};
  EXPECT_EQ(join_tokens(t), "a b");
}

TEST(FrequencyProfile, CountsSupportOfOneDoc) {
  const std::vector<SparseLatent> latents{SparseLatent(10, {{3, 0.5}, {7, -1.0}})};
  const auto f = frequency_profile(latents);
  for (std::uint32_t j = 0; j < 10; ++j) EXPECT_EQ(f.feature_counts[j], (j == 3 || j == 7) ? 1u : 0u);
  EXPECT_EQ(f.total_nnz, 2u);
  EXPECT_EQ(f.feature_series.size(), 2u);
}

TEST(FrequencyProfile, DuplicateDocsDoubleEveryCount) {
  std::mt19937_64 rng(1);
  const auto p = testing::random_params(rng, 6, 12, 3);
  std::vector<SparseLatent> once;
  std::vector<std::string> texts;
  for (int i = 0; i < 20; ++i) {
    once.push_back(encode(p, testing::gaussian_vector(rng, 6)));
    texts.push_back("w" + std::to_string(i % 4) + " Common");
  }
  auto twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  auto texts2 = texts;
  texts2.insert(texts2.end(), texts.begin(), texts.end());
  const auto a = frequency_profile(once, &texts);
  const auto b = frequency_profile(twice, &texts2);
  for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(b.feature_counts[j], 2 * a.feature_counts[j]);
  for (const auto& [w, c] : a.unigram_counts) EXPECT_EQ(b.unigram_counts.at(w), 2 * c);
  EXPECT_EQ(a.unigram_counts.at("common"), 20u);
  std::uint64_t sum = 0;
  for (auto c : a.feature_counts) sum += c;
  EXPECT_EQ(sum, a.total_nnz);
}

TEST(FrequencyProfile, RejectsEmptyCorpus) {
  EXPECT_THROW(frequency_profile(std::vector<SparseLatent>{}), InvalidArgument);
}

TEST(RankFrequency, SortsDescendingAndDropsZeros) {
  const std::vector<std::uint64_t> counts{0, 5, 2, 9, 0};
  EXPECT_EQ(rank_frequency(counts),
            (std::vector<RankFrequency>{{1, 9}, {2, 5}, {3, 2}}));
}

TEST(FitPowerLaw, RecoversExactPowerLaw) {
  std::vector<RankFrequency> s;
  for (std::size_t r = 1; r <= 50; ++r) {
    s.push_back({r, static_cast<std::uint64_t>(std::llround(1e6 * std::pow(r, -1.5)))});
  }
  const auto fit = fit_power_law(s);
  EXPECT_NEAR(fit.slope, -1.5, 1e-3);
  EXPECT_EQ(fit.points, 50u);
}

TEST(FitPowerLaw, PlantedFeatureUsageSlopeMatchesExponent) {
  // Planted codes of the synthetic corpus are latents of the dictionary model;
  // their atom usage follows the generator's Zipf law.
  SynthConfig c;
  c.seed = 3;
  c.n_queries = 2000;
  c.n_distractors = 20000;
  c.docs_per_query = 1;
  const auto b = generate_synthetic(c);
  std::vector<SparseLatent> latents;
  for (const auto& code : b.doc_codes) latents.push_back(planted_latent(code, c.n_true));
  const auto f = frequency_profile(latents);
  const auto fit = fit_power_law(f.feature_series, 50);
  EXPECT_NEAR(fit.slope, -c.zipf_exponent, 0.1);
}

TEST(TopActivatingDocs, OrdersByActivationThenDocId) {
  const std::vector<std::string> ids{"c", "a", "b", "d"};
  const std::vector<SparseLatent> l{SparseLatent(3, {{1, 0.5}}), SparseLatent(3, {{1, 0.9}}),
                                    SparseLatent(3, {{1, 0.5}}), SparseLatent(3, {{2, 1.0}})};
  const auto top = top_activating_docs(1, ids, l, 2);
  EXPECT_EQ(top, (std::vector<ScoredDoc>{{"a", 0.9}, {"b", 0.5}}));
  EXPECT_TRUE(top_activating_docs(0, ids, l).empty());
  EXPECT_THROW(top_activating_docs(3, ids, l), InvalidArgument);
}

TEST(TopActivatingDocs, MatchesFullSortOracle) {
  std::mt19937_64 rng(4);
  const auto p = testing::random_params(rng, 5, 10, 3);
  std::vector<std::string> ids;
  std::vector<SparseLatent> l;
  for (int i = 0; i < 300; ++i) {
    ids.push_back("doc" + std::to_string(rng() % 100000));
    l.push_back(encode(p, testing::gaussian_vector(rng, 5)));
  }
  for (std::uint32_t f = 0; f < 10; ++f) {
    std::vector<ScoredDoc> all;
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (l[i].activation(f) != 0.0) all.push_back({ids[i], l[i].activation(f)});
    }
    std::sort(all.begin(), all.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
      return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
    });
    if (all.size() > 25) all.resize(25);
    EXPECT_EQ(top_activating_docs(f, ids, l, 25), all);
  }
}

TEST(ToyHashEmbedder, SumsTokenVectorsDeterministically) {
  ToyHashEmbedder e(8, 5);
  const auto v = e.embed({"Alpha beta, alpha"})[0];
  const auto a = e.token_vector("alpha");
  const auto b = e.token_vector("beta");
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(v[i], 2 * a[i] + b[i], 1e-15);
    EXPECT_LE(std::abs(a[i]), 1.0 / std::sqrt(8.0));
  }
  EXPECT_EQ(ToyHashEmbedder(8, 5).token_vector("alpha"), a);
  EXPECT_NE(ToyHashEmbedder(8, 6).token_vector("alpha"), a);
  e.set_token_vector("alpha", std::vector<double>(8, 1.0));
  EXPECT_EQ(e.embed({"alpha"})[0], std::vector<double>(8, 1.0));
  EXPECT_THROW(e.set_token_vector("x", std::vector<double>(3, 1.0)), InvalidArgument);
}

// Feature 0 is driven only by "alpha"; every other token pushes feature 1.
ToyHashEmbedder alpha_embedder() {
  ToyHashEmbedder e(4, 1);
  for (const char* t : {"the", "cat", "sat", "on", "mat"}) e.set_token_vector(t, {0.0, 0.5, 0.0, 0.0});
  e.set_token_vector("alpha", {10.0, 0.0, 0.0, 0.0});
  return e;
}

TEST(ActivationSeries, StepsUpAtTheDrivingToken) {
  auto e = alpha_embedder();
  const auto p = identity_params(4, 1);
  const std::vector<std::string> tokens{"the", "cat", "alpha", "sat", "on"};
  const auto s = activation_series(p, e, tokens, 0, "d1");
  EXPECT_EQ(s.activations, (std::vector<double>{0.0, 0.0, 10.0, 10.0, 10.0}));
  EXPECT_EQ(s.tokens, tokens);
  const auto diff = activation_series(p, e, tokens, 0, "d1", SeriesMode::first_difference);
  EXPECT_EQ(diff.activations, (std::vector<double>{0.0, 0.0, 10.0, 0.0, 0.0}));
  const auto inactive = activation_series(p, e, tokens, 2, "d1");
  EXPECT_EQ(inactive.activations, std::vector<double>(5, 0.0));
}

TEST(ActivationSeries, LengthEqualsTokenCount) {
  ToyHashEmbedder e(6, 2);
  std::mt19937_64 rng(6);
  const auto p = testing::random_params(rng, 6, 12, 3);
  for (std::size_t n : {1u, 31u, 32u, 33u, 70u}) {
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < n; ++i) tokens.push_back("t" + std::to_string(rng() % 9));
    EXPECT_EQ(activation_series(p, e, tokens, 1).activations.size(), n);
  }
  EXPECT_THROW(activation_series(p, e, std::vector<std::string>{}, 1), InvalidArgument);
}

class FailingEmbedder final : public EmbedderClient {
 public:
  std::vector<std::vector<double>> embed(const std::vector<std::string>&) override {
    throw ClientError("down");
  }
  std::size_t dim() const override { return 4; }
};

TEST(ActivationSeries, EmbedderFailureNamesPrefixPosition) {
  FailingEmbedder e;
  const std::vector<std::string> tokens{"a", "b"};
  try {
    activation_series(identity_params(4, 1), e, tokens, 0);
    FAIL();
  } catch (const ClientError& err) {
    EXPECT_NE(std::string(err.what()).find("prefix 1"), std::string::npos) << err.what();
  }
}

TEST(ReplayActivation, MatchesLastSeriesValue) {
  auto e = alpha_embedder();
  const auto p = identity_params(4, 1);
  const std::vector<std::string> tokens{"cat", "alpha"};
  EXPECT_EQ(replay_activation(p, e, tokens, 0), 10.0);
}

TEST(LlmClients, ReplayServesRecordedExchanges) {
  testing::TempDir dir("llm");
  const std::vector<ChatMessage> m{{"user", "explain"}};
  write_llm_exchange(dir.path(), m, "media, television");
  ReplayLlmClient replay(dir.path());
  EXPECT_EQ(replay.complete(m), "media, television");
  EXPECT_THROW(replay.complete({{"user", "other"}}), ClientError);
  EXPECT_EQ(llm_request_key(m), llm_request_key(m));
  EXPECT_NE(llm_request_key(m), llm_request_key({{"user", "other"}}));
}

// Local chat-completion stub: fails `failures` times with 503, then answers.
class StubLlmServer {
 public:
  explicit StubLlmServer(int failures) : failures_(failures) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int seen = max_in_flight_.load();
      while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      --in_flight_;
      if (calls_++ < failures_) {
        res.status = 503;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const auto content = "echo: " + body["messages"][0]["content"].get<std::string>();
      res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubLlmServer() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }
  int max_in_flight() const { return max_in_flight_.load(); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  std::atomic<int> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

TEST(HttpLlmClient, RetriesServerErrorsThenSucceedsAndLogs) {
  StubLlmServer server(2);
  testing::TempDir dir("llmlog");
  HttpLlmConfig cfg;
  cfg.endpoint = {"http://127.0.0.1:" + std::to_string(server.port()), "/v1/chat/completions", 5.0};
  cfg.backoff_seconds = 0.01;
  cfg.log_dir = dir.path();
  HttpLlmClient client(cfg);
  const std::vector<ChatMessage> m{{"user", "hi"}};
  EXPECT_EQ(client.complete(m), "echo: hi");
  EXPECT_EQ(client.attempts(), 3u);
  EXPECT_EQ(ReplayLlmClient(dir.path()).complete(m), "echo: hi");
}

TEST(HttpLlmClient, GivesUpAfterMaxRetries) {
  StubLlmServer server(100);
  HttpLlmConfig cfg;
  cfg.endpoint = {"http://127.0.0.1:" + std::to_string(server.port()), "/v1/chat/completions", 5.0};
  cfg.backoff_seconds = 0.001;
  cfg.max_retries = 2;
  HttpLlmClient client(cfg);
  EXPECT_THROW(client.complete({{"user", "hi"}}), ClientError);
  EXPECT_EQ(client.attempts(), 3u);
}

TEST(HttpLlmClient, CapsConcurrentRequests) {
  StubLlmServer server(0);
  HttpLlmConfig cfg;
  cfg.endpoint = {"http://127.0.0.1:" + std::to_string(server.port()), "/v1/chat/completions", 5.0};
  cfg.max_concurrency = 2;
  HttpLlmClient client(cfg);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&client, i] {
      EXPECT_EQ(client.complete({{"user", std::to_string(i)}}), "echo: " + std::to_string(i));
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_LE(server.max_in_flight(), 2);
}

TEST(HttpEmbedderClient, UnreachableEndpointIsClientError) {
  HttpEmbedderClient client({"http://127.0.0.1:1", "/embed", 1.0}, 4);
  EXPECT_THROW(client.embed({"x"}), ClientError);
}

}  // namespace
}  // namespace embscope
