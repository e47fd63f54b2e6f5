// SPDX-License-Identifier: Apache-2.0
#include "embscope/store.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "json.hpp"

#include "embscope/binary_io.hpp"
#include "embscope/error.hpp"

namespace embscope {

namespace {
constexpr std::string_view kStoreMagic = "EMBS";
constexpr std::uint32_t kStoreVersion = 1;
}  // namespace

const char* to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::query ? "query" : "document";
}

EmbeddingStore::EmbeddingStore(std::size_t dim, EmbeddingKind kind) : dim_(dim), kind_(kind) {
  if (dim == 0) throw InvalidArgument("EmbeddingStore: dimension must be positive");
}

void EmbeddingStore::reserve(std::size_t rows) {
  ids_.reserve(rows);
  data_.reserve(rows * dim_);
  index_.reserve(rows);
}

void EmbeddingStore::add(std::string id, std::span<const double> values) {
  if (values.size() != dim_) {
    throw InvalidArgument("EmbeddingStore: row '" + id + "' has dimension " +
                          std::to_string(values.size()) + ", expected " + std::to_string(dim_));
  }
  if (!all_finite(values)) throw InvalidArgument("EmbeddingStore: row '" + id + "' is not finite");
  if (index_.contains(id)) throw InvalidArgument("EmbeddingStore: duplicate id '" + id + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), values.begin(), values.end());
}

void EmbeddingStore::add(std::string id, std::span<const float> values) {
  std::vector<double> promoted(values.begin(), values.end());
  add(std::move(id), std::span<const double>(promoted));
}

std::optional<std::size_t> EmbeddingStore::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingStore::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidArgument("EmbeddingStore: unknown id '" + id + "'");
  return it->second;
}

bool EmbeddingStore::same_as_f32(const EmbeddingStore& other) const {
  if (dim_ != other.dim_ || kind_ != other.kind_ || ids_ != other.ids_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (static_cast<float>(data_[i]) != static_cast<float>(other.data_[i])) return false;
  }
  return true;
}

bool EmbeddingStore::operator==(const EmbeddingStore& other) const {
  return dim_ == other.dim_ && kind_ == other.kind_ && ids_ == other.ids_ &&
         data_ == other.data_;
}

std::vector<std::uint8_t> serialize_store(const EmbeddingStore& store) {
  ByteWriter w;
  w.raw(kStoreMagic);
  w.u32(kStoreVersion);
  w.u32(static_cast<std::uint32_t>(store.dim()));
  w.u64(store.size());
  w.u8(static_cast<std::uint8_t>(store.kind()));
  for (const auto& id : store.ids()) w.str(id);
  for (std::size_t r = 0; r < store.size(); ++r) {
    for (double v : store.row(r)) w.f32(static_cast<float>(v));
  }
  append_crc(w);
  return w.take();
}

EmbeddingStore parse_store(std::span<const std::uint8_t> bytes) {
  ByteReader header(bytes);
  if (bytes.size() < kStoreMagic.size() || header.raw(kStoreMagic.size()) != kStoreMagic) {
    throw FormatError("bad magic, not an embedding store", 0);
  }
  const auto version = header.u32();
  if (version != kStoreVersion) throw UnsupportedVersion(version, kStoreVersion, 4);

  ByteReader r(check_crc(bytes));
  r.raw(kStoreMagic.size());
  r.u32();
  const auto dim = r.u32();
  const auto count = r.u64();
  const auto kind_byte = r.u8();
  if (kind_byte > 1) throw FormatError("invalid kind byte", r.offset() - 1);
  if (dim == 0) throw FormatError("zero dimension", 8);
  // Each row needs at least a 4-byte id prefix plus its floats.
  if (count > r.remaining() / (4 + 4ull * dim)) {
    throw FormatError("row count exceeds file size", r.offset());
  }

  EmbeddingStore store(dim, static_cast<EmbeddingKind>(kind_byte));
  store.reserve(count);
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(r.str());
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    for (auto& v : row) v = r.f32();
    try {
      store.add(std::move(ids[i]), std::span<const float>(row));
    } catch (const InvalidArgument& e) {
      throw FormatError(e.what(), at);
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after matrix", r.offset());
  return store;
}

void write_store(const std::filesystem::path& path, const EmbeddingStore& store) {
  write_file_bytes(path, serialize_store(store));
}

EmbeddingStore read_store(const std::filesystem::path& path) {
  return parse_store(read_file_bytes(path));
}

EmbeddingStore import_jsonl(const std::filesystem::path& path, EmbeddingKind kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::optional<EmbeddingStore> store;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!j.contains("id") || !j.contains("vector") || !j["vector"].is_array()) {
      throw ParseError("expected {\"id\", \"vector\"}", lineno);
    }
    const auto id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    std::vector<double> values;
    try {
      values = j["vector"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!store) {
      if (values.empty()) throw ParseError("empty vector", lineno);
      store.emplace(values.size(), kind);
    }
    try {
      store->add(id, std::span<const double>(values));
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (!store) throw ParseError("no embeddings found", lineno);
  return std::move(*store);
}

EmbeddingStore import_raw_f32(const std::filesystem::path& matrix_path,
                              const std::filesystem::path& ids_path, std::size_t dim,
                              EmbeddingKind kind) {
  const auto bytes = read_file_bytes(matrix_path);
  if (dim == 0 || bytes.size() % (4 * dim) != 0) {
    throw FormatError("raw matrix size is not a multiple of 4*dim", bytes.size());
  }
  const std::size_t rows = bytes.size() / (4 * dim);
  std::ifstream in(ids_path);
  if (!in) throw std::runtime_error("cannot open " + ids_path.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  if (ids.size() != rows) {
    throw InvalidArgument("raw import: " + std::to_string(ids.size()) + " ids for " +
                          std::to_string(rows) + " rows");
  }
  EmbeddingStore store(dim, kind);
  store.reserve(rows);
  ByteReader r(bytes);
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& v : row) v = r.f32();
    store.add(ids[i], std::span<const float>(row));
  }
  return store;
}

std::vector<std::pair<std::string, std::string>> read_texts_tsv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError("expected `doc_id<TAB>text`", line_no);
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

void write_texts_tsv(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::string>>& texts) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& [id, text] : texts) {
    if (id.empty() || id.find_first_of("\t\n") != std::string::npos) {
      throw InvalidArgument("write_texts_tsv: bad doc id '" + id + "'");
    }
    std::string clean = text;
    for (auto& c : clean) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    out << id << '\t' << clean << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("EMBSCOPE_DATA_ROOT"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / path;
  }
  return path;
}

}  // namespace embscope
