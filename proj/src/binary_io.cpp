// SPDX-License-Identifier: Apache-2.0
#include "embscope/binary_io.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <system_error>

#include "embscope/error.hpp"

namespace embscope {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void ByteReader::need(std::size_t n, const char* what) const {
  if (remaining() < n) throw FormatError(std::string("truncated input reading ") + what, pos_);
}

std::uint8_t ByteReader::u8() {
  need(1, "u8");
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string_view ByteReader::raw(std::size_t n) {
  need(n, "bytes");
  std::string_view s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::str() {
  const auto n = u32();
  return std::string(raw(n));
}

std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in slices.
  constexpr std::size_t kSlice = 1u << 30;
  for (std::size_t off = 0; off < data.size(); off += kSlice) {
    const auto n = static_cast<uInt>(std::min(kSlice, data.size() - off));
    crc = crc32(crc, data.data() + off, n);
  }
  return static_cast<std::uint32_t>(crc);
}

void append_crc(ByteWriter& w) { w.u32(crc32_of(w.buffer())); }

std::span<const std::uint8_t> check_crc(std::span<const std::uint8_t> file) {
  if (file.size() < 4) throw FormatError("file too short for checksum trailer", file.size());
  const auto payload = file.first(file.size() - 4);
  ByteReader trailer(file.subspan(file.size() - 4));
  const auto stored = trailer.u32();
  if (stored != crc32_of(payload)) throw FormatError("checksum mismatch", payload.size());
  return payload;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return data;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace embscope
