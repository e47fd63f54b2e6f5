// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "embscope/numerics.hpp"

namespace embscope {

enum class EmbeddingKind : std::uint8_t { query = 0, document = 1 };

const char* to_string(EmbeddingKind kind);

/// Id-addressed collection of d-dimensional embeddings, kept in insertion
/// order. Values are held as f64 in memory and written as f32 on disk.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t dim, EmbeddingKind kind);

  /// Throws InvalidArgument on duplicate id, wrong dimension, or non-finite values.
  void add(std::string id, std::span<const double> values);
  void add(std::string id, std::span<const float> values);
  void reserve(std::size_t rows);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  EmbeddingKind kind() const noexcept { return kind_; }
  const std::string& id(std::size_t row) const { return ids_.at(row); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
  std::optional<std::size_t> find(const std::string& id) const;
  /// Row of `id`; throws InvalidArgument when absent.
  std::size_t index_of(const std::string& id) const;

  /// Rows whose values are identical after rounding to f32.
  bool same_as_f32(const EmbeddingStore& other) const;
  bool operator==(const EmbeddingStore& other) const;

 private:
  std::size_t dim_ = 0;
  EmbeddingKind kind_ = EmbeddingKind::document;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// File layout (little-endian):
///   "EMBS" | u32 version | u32 dim | u64 count | u8 kind
///   | count x (u32 length, UTF-8 id) | count*dim f32 | u32 CRC32 of all prior bytes
std::vector<std::uint8_t> serialize_store(const EmbeddingStore& store);
EmbeddingStore parse_store(std::span<const std::uint8_t> bytes);
void write_store(const std::filesystem::path& path, const EmbeddingStore& store);
EmbeddingStore read_store(const std::filesystem::path& path);

/// JSON-lines ingestion: one {"id": ..., "vector": [...]} object per line.
EmbeddingStore import_jsonl(const std::filesystem::path& path, EmbeddingKind kind);
/// Raw little-endian f32 row-major matrix plus a newline-separated id file.
EmbeddingStore import_raw_f32(const std::filesystem::path& matrix_path,
                              const std::filesystem::path& ids_path, std::size_t dim,
                              EmbeddingKind kind);

/// Document texts as `doc_id<TAB>text` lines. Tabs and newlines inside a text
/// are written as spaces.
std::vector<std::pair<std::string, std::string>> read_texts_tsv(const std::filesystem::path& path);
void write_texts_tsv(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::string>>& texts);

/// Resolves relative paths against $EMBSCOPE_DATA_ROOT when it is set.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

}  // namespace embscope
