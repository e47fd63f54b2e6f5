// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte encoding helpers for the on-disk formats.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace embscope {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  /// u32 length prefix followed by the bytes.
  void str(std::string_view s);

  std::size_t size() const noexcept { return buf_.size(); }
  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every overrun throws FormatError with the offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::string_view raw(std::size_t n);

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> data);

/// Appends a CRC32 of everything written so far.
void append_crc(ByteWriter& w);
/// Verifies the trailing CRC32 and returns the payload without it.
std::span<const std::uint8_t> check_crc(std::span<const std::uint8_t> file);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes via a sibling temporary file and rename, so readers never observe a
/// partially written file.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace embscope
