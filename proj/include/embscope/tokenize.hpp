// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace embscope {

/// Whitespace split, ASCII lowercase, ASCII punctuation removed. Tokens that
/// become empty are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Tokens joined by single spaces.
std::string join_tokens(std::span<const std::string> tokens);

}  // namespace embscope
