// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace embscope {

/// Precondition violation on caller-supplied data (shapes, ranges, ids).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or corrupted binary file. `offset` is the byte position where
/// the reader gave up.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedVersion : public FormatError {
 public:
  UnsupportedVersion(unsigned found, unsigned expected, std::size_t offset)
      : FormatError("unsupported version " + std::to_string(found) +
                        " (expected " + std::to_string(expected) + ")",
                    offset) {}
};

/// Malformed text input; `line` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Failure talking to an external embedder or LLM endpoint.
class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace embscope
