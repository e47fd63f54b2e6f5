// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "embscope/checkpoint.hpp"
#include "embscope/error.hpp"
#include "embscope/synthetic.hpp"
#include "embscope/trainer.hpp"

#include "json.hpp"

namespace embscope {
namespace {

SyntheticBenchmark small_bench(std::uint64_t seed = 1) {
  SynthConfig c;
  c.seed = seed;
  c.d = 16;
  c.n_true = 32;
  c.k_true = 3;
  c.n_queries = 40;
  c.docs_per_query = 4;
  c.n_distractors = 60;
  c.noise_sigma = 0.0;
  return generate_synthetic(c);
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 12;
  c.initial_lr = 1e-2;
  c.positives_per_query = 3;
  c.k = 3;
  c.latent_dim = 32;
  c.seed = 7;
  return c;
}

TEST(TrainConfig, RejectsInvalidSettings) {
  auto c = small_config();
  c.k = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.k = 33;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.kld_weight = -1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.min_lr = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Train, ZeroEpochsReturnsInitialParamsAndEmptyReport) {
  const auto b = small_bench();
  auto c = small_config();
  c.epochs = 0;
  const auto r = train(b.queries, b.corpus, b.qrels, c);
  EXPECT_TRUE(r.report.epochs.empty());
  EXPECT_EQ(r.state.params, initial_state(b.queries, b.corpus, b.qrels, c).params);
  EXPECT_EQ(r.state.epoch, 0u);
}

TEST(Train, RejectsEmptyQrelsAndMissingIds) {
  const auto b = small_bench();
  EXPECT_THROW(train(b.queries, b.corpus, QrelSet{}, small_config()), InvalidArgument);
  QrelSet bad;
  bad.add("q00000", "nope", 1);
  EXPECT_THROW(train(b.queries, b.corpus, bad, small_config()), InvalidArgument);
}

TEST(Train, OneRecordPerEpochAndLossDecreases) {
  const auto b = small_bench();
  const auto r = train(b.queries, b.corpus, b.qrels, small_config());
  ASSERT_EQ(r.report.epochs.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(r.report.epochs[i].epoch, i + 1);
  EXPECT_LT(r.report.epochs[9].total, r.report.epochs[0].total);
  EXPECT_EQ(r.state.epoch, 12u);
}

TEST(Train, IdenticalSeedsAreBitwiseIdentical) {
  const auto b = small_bench();
  const auto a = train(b.queries, b.corpus, b.qrels, small_config());
  const auto c = train(b.queries, b.corpus, b.qrels, small_config());
  EXPECT_EQ(a.report, c.report);
  EXPECT_EQ(serialize_checkpoint(a.state), serialize_checkpoint(c.state));
  auto other = small_config();
  other.seed = 8;
  EXPECT_NE(train(b.queries, b.corpus, b.qrels, other).report, a.report);
}

TEST(Train, ResumedRunMatchesUninterruptedRun) {
  const auto b = small_bench();
  const auto full = train(b.queries, b.corpus, b.qrels, small_config());
  const auto half = train(b.queries, b.corpus, b.qrels, small_config(), {}, 5);
  ASSERT_EQ(half.report.epochs.size(), 5u);
  // Round-trip through the checkpoint format before continuing.
  const auto state = parse_checkpoint(serialize_checkpoint(half.state));
  const auto rest = resume_training(state, b.queries, b.corpus, b.qrels);
  EXPECT_EQ(rest.state.params, full.state.params);
  ASSERT_EQ(rest.report.epochs.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(rest.report.epochs[i], full.report.epochs[i + 5]);
}

TEST(Train, EpochCallbackSeesEveryEpoch) {
  const auto b = small_bench();
  std::size_t calls = 0;
  train(b.queries, b.corpus, b.qrels, small_config(),
        [&](const TrainState& s, const EpochRecord& e) {
          ++calls;
          EXPECT_EQ(s.epoch, e.epoch);
        });
  EXPECT_EQ(calls, 12u);
}

TEST(Train, ReportJsonLinesHaveExpectedFields) {
  const auto b = small_bench();
  auto c = small_config();
  c.epochs = 2;
  const auto r = train(b.queries, b.corpus, b.qrels, c);
  std::ostringstream out;
  write_report_jsonl(out, r.report);
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "mse", "kld", "total", "dead_latents", "lr", "kld_weight"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    ++n;
  }
  EXPECT_EQ(n, 2u);
}

}  // namespace
}  // namespace embscope
