// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "embscope/numerics.hpp"
#include "embscope/qrels.hpp"
#include "embscope/sae.hpp"
#include "embscope/store.hpp"

namespace embscope {

struct TrainConfig {
  std::uint32_t batch_size = 512;  // queries per batch; positives ride along
  std::uint32_t epochs = 128;
  double initial_lr = 1e-3;
  double min_lr = 0.0;
  std::uint32_t positives_per_query = 16;
  double kld_weight = 1.0;
  std::uint32_t k = 4;
  std::uint32_t latent_dim = 256;
  std::uint64_t seed = 0;
  std::uint32_t threads = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Per-tensor Adam state for the four SaeParams blocks.
using OptimizerState = std::array<AdamState, 4>;

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
  SaeParams params;
  TrainConfig config;
  std::uint64_t epoch = 0;  // completed epochs
  OptimizerState optimizer;

  bool operator==(const TrainState&) const = default;
};

struct EpochRecord {
  std::uint64_t epoch = 0;  // 1-based
  double mse = 0.0;
  double kld = 0.0;
  double total = 0.0;
  std::uint32_t dead_latents = 0;
  double lr = 0.0;  // rate used by the last step of the epoch
  std::uint64_t skipped_queries = 0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
  double kld_weight = 0.0;
  std::vector<EpochRecord> epochs;
  bool operator==(const TrainReport&) const = default;
};

struct TrainResult {
  TrainState state;
  TrainReport report;
};

inline constexpr std::uint64_t kNoStop = ~std::uint64_t{0};

using EpochCallback = std::function<void(const TrainState&, const EpochRecord&)>;

/// Fresh parameters for a run (seeded init; decoder bias = mean of a sampled
/// subset of the training embeddings).
TrainState initial_state(const EmbeddingStore& queries, const EmbeddingStore& corpus,
                         const QrelSet& qrels, const TrainConfig& config);

/// Trains from scratch for config.epochs epochs.
TrainResult train(const EmbeddingStore& queries, const EmbeddingStore& corpus,
                  const QrelSet& qrels, const TrainConfig& config,
                  const EpochCallback& on_epoch = {},
                  std::uint64_t stop_after = kNoStop);

/// Continues `state` up to state.config.epochs, or until epoch `stop_after`
/// if that is earlier. The learning-rate schedule always spans
/// state.config.epochs. Epoch RNG streams depend only on (seed, epoch), so a
/// resumed run matches an uninterrupted one exactly.
TrainResult resume_training(TrainState state, const EmbeddingStore& queries,
                            const EmbeddingStore& corpus, const QrelSet& qrels,
                            const EpochCallback& on_epoch = {},
                            std::uint64_t stop_after = kNoStop);

/// One JSON object per epoch: epoch, mse, kld, total, dead_latents, lr,
/// skipped_queries, kld_weight.
void write_report_jsonl(std::ostream& out, const TrainReport& report);
void write_report_jsonl(const std::filesystem::path& path, const TrainReport& report);

}  // namespace embscope
