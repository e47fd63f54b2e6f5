// SPDX-License-Identifier: Apache-2.0
//
// External collaborators of the interpretation pipeline: text embedders and
// chat-completion LLMs. Every client has an offline implementation so the
// pipeline runs without network access.
#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace embscope {

class EmbedderClient {
 public:
  virtual ~EmbedderClient() = default;
  /// One embedding per text, each of size dim(). Throws ClientError.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  virtual std::size_t dim() const = 0;
};

/// Deterministic embedder: tokenizes the text and sums one fixed vector per
/// token occurrence. Token vectors have entries uniform in [-1, 1] / sqrt(dim)
/// derived from a hash of (seed, token) unless overridden.
class ToyHashEmbedder final : public EmbedderClient {
 public:
  ToyHashEmbedder(std::size_t dim, std::uint64_t seed);

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }

  std::vector<double> token_vector(const std::string& token) const;
  void set_token_vector(const std::string& token, std::vector<double> vector);
  std::vector<double> embed_tokens(std::span<const std::string> tokens) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::map<std::string, std::vector<double>> overrides_;
};

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path;
  double timeout_seconds = 30.0;
};

/// POSTs {"texts": [...]} and expects {"embeddings": [[...], ...]}.
class HttpEmbedderClient final : public EmbedderClient {
 public:
  HttpEmbedderClient(HttpEndpoint endpoint, std::size_t dim);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }

 private:
  HttpEndpoint endpoint_;
  std::size_t dim_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Returns the assistant message text. Throws ClientError on any failure.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

/// Key under which an exchange is logged and replayed.
std::string llm_request_key(const std::vector<ChatMessage>& messages);

struct HttpLlmConfig {
  HttpEndpoint endpoint{"http://127.0.0.1:8000", "/v1/chat/completions", 30.0};
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "EMBSCOPE_LLM_API_KEY";
  std::size_t max_concurrency = 4;
  std::size_t max_retries = 3;
  double backoff_seconds = 0.2;  // doubled after each failed attempt
  std::optional<std::filesystem::path> log_dir;
};

/// Chat-completion client with a concurrent-request cap and retry with
/// exponential backoff on transport errors, 429 and 5xx. When log_dir is set
/// every successful exchange is written to <log_dir>/<key>.json.
class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpLlmConfig config);
  std::string complete(const std::vector<ChatMessage>& messages) override;

  std::size_t attempts() const;

 private:
  HttpLlmConfig config_;
  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  std::size_t in_flight_ = 0;
  std::size_t attempts_ = 0;
};

/// Serves completions from exchanges logged by HttpLlmClient.
class ReplayLlmClient final : public LlmClient {
 public:
  explicit ReplayLlmClient(std::filesystem::path log_dir);
  std::string complete(const std::vector<ChatMessage>& messages) override;

 private:
  std::filesystem::path log_dir_;
};

/// Writes an exchange in the format ReplayLlmClient reads.
void write_llm_exchange(const std::filesystem::path& log_dir,
                        const std::vector<ChatMessage>& messages, const std::string& response);

}  // namespace embscope
