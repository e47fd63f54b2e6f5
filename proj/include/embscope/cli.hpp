// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "embscope/clients.hpp"

namespace embscope {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Runs one `embscope` subcommand. Returns 0 on success, 1 on usage errors
/// and 2 on runtime failures.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Splits `scheme://host[:port]/path` into base URL and path; `default_path`
/// is used when the URL has none.
HttpEndpoint parse_endpoint(const std::string& url, const std::string& default_path);

/// "toy" gives the hashing embedder; anything else is an HTTP endpoint.
std::shared_ptr<EmbedderClient> make_embedder(const std::string& spec, std::size_t dim,
                                              std::uint64_t seed);

}  // namespace embscope
