// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace embscope {

/// query_id -> doc_id -> grade. Any grade >= 1 counts as relevant.
class QrelSet {
 public:
  using Judgments = std::map<std::string, int>;

  /// Keeps the larger grade when (query, doc) is already present; returns
  /// false in that case so callers can warn.
  bool add(const std::string& query_id, const std::string& doc_id, int grade);

  bool empty() const noexcept { return judgments_.empty(); }
  std::size_t query_count() const noexcept { return judgments_.size(); }
  bool contains(const std::string& query_id) const { return judgments_.contains(query_id); }
  const Judgments* find(const std::string& query_id) const;
  bool is_relevant(const std::string& query_id, const std::string& doc_id) const;
  /// Relevant doc ids (grade >= 1) for a query, in doc_id order.
  std::vector<std::string> relevant(const std::string& query_id) const;
  std::size_t relevant_count(const std::string& query_id) const;

  const std::map<std::string, Judgments>& all() const noexcept { return judgments_; }
  bool operator==(const QrelSet&) const = default;

 private:
  std::map<std::string, Judgments> judgments_;
};

/// Parses `qid 0 docid grade` lines. Blank lines are skipped; anything else
/// malformed throws ParseError with the 1-based line number. Duplicate pairs
/// keep the max grade and append a message to `warnings` when given.
QrelSet parse_qrels(std::istream& in, std::vector<std::string>* warnings = nullptr);
QrelSet read_qrels(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
void write_qrels(std::ostream& out, const QrelSet& qrels);
void write_qrels(const std::filesystem::path& path, const QrelSet& qrels);

}  // namespace embscope
