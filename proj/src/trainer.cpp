// SPDX-License-Identifier: Apache-2.0
#include "embscope/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "json.hpp"

#include "embscope/error.hpp"
#include "embscope/losses.hpp"

namespace embscope {

namespace {

constexpr std::size_t kBiasSampleSize = 4096;

std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t salt) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(salt)));
}

// Stream salts; epoch e uses kEpochSalt + e.
constexpr std::uint64_t kInitSalt = 0x1000;
constexpr std::uint64_t kBiasSalt = 0x2000;
constexpr std::uint64_t kEpochSalt = 0x10000;

struct TrainingItem {
  std::size_t query_row;
  std::vector<std::size_t> positive_rows;  // corpus rows, ascending
};

std::vector<TrainingItem> collect_items(const EmbeddingStore& queries,
                                        const EmbeddingStore& corpus, const QrelSet& qrels) {
  if (qrels.empty()) throw InvalidArgument("train: empty qrels");
  if (queries.dim() != corpus.dim()) throw InvalidArgument("train: query/corpus dimension mismatch");
  std::vector<TrainingItem> items;
  for (const auto& [qid, docs] : qrels.all()) {
    const auto qrow = queries.find(qid);
    if (!qrow) throw InvalidArgument("train: qrels query '" + qid + "' missing from query store");
    TrainingItem item{*qrow, {}};
    for (const auto& [doc, grade] : docs) {
      const auto drow = corpus.find(doc);
      if (!drow) throw InvalidArgument("train: qrels document '" + doc + "' missing from corpus");
      if (grade >= 1) item.positive_rows.push_back(*drow);
    }
    std::sort(item.positive_rows.begin(), item.positive_rows.end());
    items.push_back(std::move(item));
  }
  std::sort(items.begin(), items.end(),
            [](const TrainingItem& a, const TrainingItem& b) { return a.query_row < b.query_row; });
  return items;
}

std::uint64_t batches_per_epoch(std::size_t items, std::uint32_t batch_size) {
  return (items + batch_size - 1) / batch_size;
}

OptimizerState fresh_optimizer(const SaeParams& params) {
  OptimizerState opt;
  auto blocks = params.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) opt[b] = AdamState::for_size(blocks[b].size());
  return opt;
}

EpochRecord run_epoch(TrainState& state, const std::vector<TrainingItem>& items,
                      const EmbeddingStore& queries, const EmbeddingStore& corpus) {
  const auto& cfg = state.config;
  auto rng = stream_for(cfg.seed, kEpochSalt + state.epoch);

  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  const auto per_epoch = batches_per_epoch(items.size(), cfg.batch_size);
  const CosineSchedule schedule{cfg.initial_lr, cfg.min_lr, cfg.epochs * per_epoch};

  EpochRecord rec;
  rec.epoch = state.epoch + 1;
  std::vector<std::uint32_t> hits(state.params.latent_dim, 0);
  std::vector<std::size_t> pool;

  for (std::uint64_t b = 0; b < per_epoch; ++b) {
    const std::size_t begin = b * cfg.batch_size;
    const std::size_t end = std::min(items.size(), begin + cfg.batch_size);
    std::vector<QueryGroup> batch;
    batch.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& item = items[order[i]];
      QueryGroup g{queries.row(item.query_row), {}};
      // Partial Fisher-Yates: uniform sample without replacement.
      pool = item.positive_rows;
      const std::size_t take = std::min<std::size_t>(cfg.positives_per_query, pool.size());
      for (std::size_t j = 0; j < take; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
        std::swap(pool[j], pool[pick(rng)]);
        g.positives.push_back(corpus.row(pool[j]));
      }
      batch.push_back(std::move(g));
    }

    auto loss = combined_loss(batch, state.params, cfg.kld_weight, cfg.threads);
    const std::uint64_t step = state.epoch * per_epoch + b;
    const double lr = cosine_lr(schedule, step);
    auto params = state.params.blocks();
    auto grads = loss.grads.blocks();
    if (lr > 0.0) {
      for (std::size_t blk = 0; blk < params.size(); ++blk) {
        adam_step(params[blk], grads[blk], state.optimizer[blk], lr);
      }
    }

    rec.mse += loss.mse;
    rec.kld += loss.kld;
    rec.total += loss.total;
    rec.skipped_queries += loss.skipped_queries;
    rec.lr = lr;
    for (std::size_t j = 0; j < hits.size(); ++j) hits[j] += loss.feature_hits[j];
  }

  const double nb = static_cast<double>(per_epoch);
  rec.mse /= nb;
  rec.kld /= nb;
  rec.total /= nb;
  rec.dead_latents = static_cast<std::uint32_t>(std::count(hits.begin(), hits.end(), 0u));
  state.epoch += 1;
  return rec;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0 || positives_per_query == 0 || k == 0 || latent_dim == 0 || threads == 0) {
    throw InvalidArgument("TrainConfig: counts must be positive");
  }
  if (k > latent_dim) throw InvalidArgument("TrainConfig: k exceeds latent_dim");
  if (!(kld_weight >= 0.0)) throw InvalidArgument("TrainConfig: kld_weight must be >= 0");
  if (!(initial_lr > 0.0) || !(min_lr >= 0.0) || min_lr > initial_lr) {
    throw InvalidArgument("TrainConfig: need 0 <= min_lr <= initial_lr and initial_lr > 0");
  }
}

TrainState initial_state(const EmbeddingStore& queries, const EmbeddingStore& corpus,
                         const QrelSet& qrels, const TrainConfig& config) {
  config.validate();
  const auto items = collect_items(queries, corpus, qrels);

  std::vector<std::span<const double>> pool;
  for (const auto& item : items) {
    pool.push_back(queries.row(item.query_row));
    for (auto r : item.positive_rows) pool.push_back(corpus.row(r));
  }
  auto rng = stream_for(config.seed, kBiasSalt);
  const std::size_t take = std::min(kBiasSampleSize, pool.size());
  for (std::size_t j = 0; j < take; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
    std::swap(pool[j], pool[pick(rng)]);
  }
  pool.resize(take);

  TrainState state;
  state.config = config;
  state.params = initialize_params(queries.dim(), config.latent_dim, config.k, pool,
                                   splitmix64(config.seed ^ kInitSalt));
  state.optimizer = fresh_optimizer(state.params);
  return state;
}

TrainResult resume_training(TrainState state, const EmbeddingStore& queries,
                            const EmbeddingStore& corpus, const QrelSet& qrels,
                            const EpochCallback& on_epoch, std::uint64_t stop_after) {
  state.config.validate();
  state.params.validate();
  if (state.params.input_dim != queries.dim()) {
    throw InvalidArgument("train: model input_dim does not match embedding dimension");
  }
  const auto items = collect_items(queries, corpus, qrels);
  TrainResult result;
  result.report.kld_weight = state.config.kld_weight;
  while (state.epoch < state.config.epochs && state.epoch < stop_after) {
    auto rec = run_epoch(state, items, queries, corpus);
    if (on_epoch) on_epoch(state, rec);
    result.report.epochs.push_back(rec);
  }
  result.state = std::move(state);
  return result;
}

TrainResult train(const EmbeddingStore& queries, const EmbeddingStore& corpus,
                  const QrelSet& qrels, const TrainConfig& config, const EpochCallback& on_epoch,
                  std::uint64_t stop_after) {
  return resume_training(initial_state(queries, corpus, qrels, config), queries, corpus, qrels,
                         on_epoch, stop_after);
}

void write_report_jsonl(std::ostream& out, const TrainReport& report) {
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["mse"] = e.mse;
    j["kld"] = e.kld;
    j["total"] = e.total;
    j["dead_latents"] = e.dead_latents;
    j["lr"] = e.lr;
    j["skipped_queries"] = e.skipped_queries;
    j["kld_weight"] = report.kld_weight;
    out << j.dump() << '\n';
  }
}

void write_report_jsonl(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_report_jsonl(out, report);
}

}  // namespace embscope
