// SPDX-License-Identifier: Apache-2.0
#include "embscope/qrels.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "embscope/error.hpp"

namespace embscope {

bool QrelSet::add(const std::string& query_id, const std::string& doc_id, int grade) {
  if (grade < 0) throw InvalidArgument("qrels: negative grade for " + query_id + "/" + doc_id);
  auto& docs = judgments_[query_id];
  auto [it, inserted] = docs.emplace(doc_id, grade);
  if (!inserted) it->second = std::max(it->second, grade);
  return inserted;
}

const QrelSet::Judgments* QrelSet::find(const std::string& query_id) const {
  auto it = judgments_.find(query_id);
  return it == judgments_.end() ? nullptr : &it->second;
}

bool QrelSet::is_relevant(const std::string& query_id, const std::string& doc_id) const {
  const auto* docs = find(query_id);
  if (docs == nullptr) return false;
  auto it = docs->find(doc_id);
  return it != docs->end() && it->second >= 1;
}

std::vector<std::string> QrelSet::relevant(const std::string& query_id) const {
  std::vector<std::string> out;
  if (const auto* docs = find(query_id)) {
    for (const auto& [doc, grade] : *docs) {
      if (grade >= 1) out.push_back(doc);
    }
  }
  return out;
}

std::size_t QrelSet::relevant_count(const std::string& query_id) const {
  std::size_t n = 0;
  if (const auto* docs = find(query_id)) {
    for (const auto& [doc, grade] : *docs) n += grade >= 1;
  }
  return n;
}

QrelSet parse_qrels(std::istream& in, std::vector<std::string>* warnings) {
  QrelSet qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string qid, iter, docid, grade_text, extra;
    if (!(fields >> qid)) continue;  // blank line
    if (!(fields >> iter >> docid >> grade_text) || (fields >> extra)) {
      throw ParseError("expected 4 fields: qid iter docid grade", lineno);
    }
    int grade = 0;
    auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
    if (ec != std::errc() || ptr != grade_text.data() + grade_text.size()) {
      throw ParseError("grade '" + grade_text + "' is not an integer", lineno);
    }
    if (grade < 0) throw ParseError("negative grade", lineno);
    if (!qrels.add(qid, docid, grade) && warnings != nullptr) {
      warnings->push_back("line " + std::to_string(lineno) + ": duplicate judgment " + qid + " " +
                          docid + ", keeping max grade");
    }
  }
  return qrels;
}

QrelSet read_qrels(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_qrels(in, warnings);
}

void write_qrels(std::ostream& out, const QrelSet& qrels) {
  for (const auto& [qid, docs] : qrels.all()) {
    for (const auto& [doc, grade] : docs) out << qid << " 0 " << doc << ' ' << grade << '\n';
  }
}

void write_qrels(const std::filesystem::path& path, const QrelSet& qrels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_qrels(out, qrels);
}

}  // namespace embscope
