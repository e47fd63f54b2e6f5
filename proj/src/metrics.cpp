// SPDX-License-Identifier: Apache-2.0
#include "embscope/metrics.hpp"

#include <algorithm>
#include <ostream>

#include "embscope/error.hpp"
#include "json.hpp"

namespace embscope {

namespace {

const QrelSet::Judgments& judgments_for(const QrelSet& qrels, const std::string& qid) {
  const auto* j = qrels.find(qid);
  if (j == nullptr) throw InvalidArgument("no qrels for query '" + qid + "'");
  return *j;
}

bool relevant_in(const QrelSet::Judgments& j, const std::string& doc) {
  const auto it = j.find(doc);
  return it != j.end() && it->second >= 1;
}

std::size_t hits_in_top(const RankedList& run, const QrelSet::Judgments& j, std::size_t k) {
  const auto depth = std::min(k, run.results.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) hits += relevant_in(j, run.results[r].doc_id);
  return hits;
}

void require_positive(std::size_t k, const char* what) {
  if (k == 0) throw InvalidArgument(std::string(what) + ": cutoff must be >= 1");
}

}  // namespace

double mrr(std::span<const RankedList> runs, const QrelSet& qrels, std::size_t cutoff) {
  require_positive(cutoff, "mrr");
  if (runs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& run : runs) {
    const auto& j = judgments_for(qrels, run.query_id);
    const auto depth = std::min(cutoff, run.results.size());
    for (std::size_t r = 0; r < depth; ++r) {
      if (relevant_in(j, run.results[r].doc_id)) {
        sum += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return sum / static_cast<double>(runs.size());
}

double precision_at(std::span<const RankedList> runs, const QrelSet& qrels, std::size_t k) {
  require_positive(k, "precision_at");
  if (runs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& run : runs) {
    sum += static_cast<double>(hits_in_top(run, judgments_for(qrels, run.query_id), k)) /
           static_cast<double>(k);
  }
  return sum / static_cast<double>(runs.size());
}

double recall_at(std::span<const RankedList> runs, const QrelSet& qrels, std::size_t k,
                 std::size_t* skipped) {
  require_positive(k, "recall_at");
  double sum = 0.0;
  std::size_t counted = 0;
  std::size_t excluded = 0;
  for (const auto& run : runs) {
    const auto& j = judgments_for(qrels, run.query_id);
    const auto total = static_cast<std::size_t>(
        std::count_if(j.begin(), j.end(), [](const auto& kv) { return kv.second >= 1; }));
    if (total == 0) {
      ++excluded;
      continue;
    }
    sum += static_cast<double>(hits_in_top(run, j, k)) / static_cast<double>(total);
    ++counted;
  }
  if (skipped != nullptr) *skipped = excluded;
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

MetricsReport compute_metrics(std::span<const RankedList> runs, const QrelSet& qrels,
                              std::size_t cutoff) {
  MetricsReport report;
  report.cutoff = cutoff;
  report.query_count = runs.size();
  report.mrr = mrr(runs, qrels, cutoff);
  report.p_at_10 = precision_at(runs, qrels, 10);
  report.r_at_10 = recall_at(runs, qrels, 10, &report.recall_skipped);
  return report;
}

void write_metrics_kv(std::ostream& out, const MetricsReport& report, const std::string& label) {
  const std::string prefix = label.empty() ? std::string{} : label + ".";
  out << prefix << "mrr@" << report.cutoff << '=' << format_double(report.mrr) << '\n'
      << prefix << "p@10=" << format_double(report.p_at_10) << '\n'
      << prefix << "r@10=" << format_double(report.r_at_10) << '\n';
  if (report.mse) out << prefix << "mse=" << format_double(*report.mse) << '\n';
  out << prefix << "queries=" << report.query_count << '\n';
  if (report.recall_skipped > 0) {
    out << prefix << "recall_skipped=" << report.recall_skipped << '\n';
  }
}

void write_metrics_jsonl(std::ostream& out, const MetricsReport& report,
                         const std::string& label) {
  nlohmann::ordered_json j;
  if (!label.empty()) j["label"] = label;
  j["mrr"] = report.mrr;
  j["p_at_10"] = report.p_at_10;
  j["r_at_10"] = report.r_at_10;
  if (report.mse) j["mse"] = *report.mse;
  j["cutoff"] = report.cutoff;
  j["queries"] = report.query_count;
  j["recall_skipped"] = report.recall_skipped;
  out << j.dump() << '\n';
}

}  // namespace embscope
