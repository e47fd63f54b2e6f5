// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "embscope/qrels.hpp"
#include "embscope/retrieval.hpp"

namespace embscope {

/// Mean reciprocal rank of the first relevant result within `cutoff`.
/// Throws InvalidArgument for a run whose query is absent from the qrels.
double mrr(std::span<const RankedList> runs, const QrelSet& qrels, std::size_t cutoff = 10);
/// Mean of |relevant in top k| / k.
double precision_at(std::span<const RankedList> runs, const QrelSet& qrels, std::size_t k = 10);
/// Mean of |relevant in top k| / |relevant| over queries with at least one
/// relevant doc. The number of excluded queries goes to `skipped`.
double recall_at(std::span<const RankedList> runs, const QrelSet& qrels, std::size_t k = 10,
                 std::size_t* skipped = nullptr);

struct MetricsReport {
  double mrr = 0.0;
  double p_at_10 = 0.0;
  double r_at_10 = 0.0;
  std::optional<double> mse;
  std::size_t cutoff = 10;  // MRR cutoff
  std::size_t query_count = 0;
  std::size_t recall_skipped = 0;
  bool operator==(const MetricsReport&) const = default;
};

/// Runs must be at least max(cutoff, 10) deep for the numbers to be exact.
MetricsReport compute_metrics(std::span<const RankedList> runs, const QrelSet& qrels,
                              std::size_t cutoff = 10);

/// `key=value` lines, each key prefixed with `label.` when label is non-empty.
void write_metrics_kv(std::ostream& out, const MetricsReport& report,
                      const std::string& label = {});
/// One JSON object on one line, with a "label" field when label is non-empty.
void write_metrics_jsonl(std::ostream& out, const MetricsReport& report,
                         const std::string& label = {});

}  // namespace embscope
