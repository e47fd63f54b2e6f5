// SPDX-License-Identifier: Apache-2.0
#include "embscope/clients.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "embscope/error.hpp"
#include "embscope/numerics.hpp"
#include "embscope/tokenize.hpp"
#include "httplib.h"
#include "json.hpp"

namespace embscope {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::unique_ptr<httplib::Client> make_client(const HttpEndpoint& ep) {
  auto client = std::make_unique<httplib::Client>(ep.base_url);
  if (!client->is_valid()) throw ClientError("invalid endpoint URL '" + ep.base_url + "'");
  const auto secs = static_cast<time_t>(ep.timeout_seconds);
  const auto usecs = static_cast<time_t>((ep.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  return client;
}

json messages_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

}  // namespace

ToyHashEmbedder::ToyHashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw InvalidArgument("ToyHashEmbedder: dim must be positive");
}

std::vector<double> ToyHashEmbedder::token_vector(const std::string& token) const {
  if (const auto it = overrides_.find(token); it != overrides_.end()) return it->second;
  std::vector<double> v(dim_);
  std::uint64_t state = splitmix64(seed_ ^ fnv1a(token));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (auto& x : v) {
    state = splitmix64(state);
    const double u = static_cast<double>(state >> 11) * 0x1.0p-53;  // [0, 1)
    x = (2.0 * u - 1.0) * scale;
  }
  return v;
}

void ToyHashEmbedder::set_token_vector(const std::string& token, std::vector<double> vector) {
  if (vector.size() != dim_ || !all_finite(vector)) {
    throw InvalidArgument("ToyHashEmbedder: override must be finite with size dim");
  }
  overrides_[token] = std::move(vector);
}

std::vector<double> ToyHashEmbedder::embed_tokens(std::span<const std::string> tokens) const {
  std::vector<double> x(dim_, 0.0);
  for (const auto& t : tokens) {
    const auto v = token_vector(t);
    for (std::size_t i = 0; i < dim_; ++i) x[i] += v[i];
  }
  return x;
}

std::vector<std::vector<double>> ToyHashEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) out.push_back(embed_tokens(tokenize(text)));
  return out;
}

HttpEmbedderClient::HttpEmbedderClient(HttpEndpoint endpoint, std::size_t dim)
    : endpoint_(std::move(endpoint)), dim_(dim) {
  if (dim == 0) throw InvalidArgument("HttpEmbedderClient: dim must be positive");
}

std::vector<std::vector<double>> HttpEmbedderClient::embed(const std::vector<std::string>& texts) {
  auto client = make_client(endpoint_);
  const json body = {{"texts", texts}};
  const auto res = client->Post(endpoint_.path, body.dump(), "application/json");
  if (!res) throw ClientError("embedder request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ClientError("embedder returned HTTP " + std::to_string(res->status));
  }
  std::vector<std::vector<double>> out;
  try {
    const auto j = json::parse(res->body);
    out = j.at("embeddings").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ClientError(std::string("embedder response malformed: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw ClientError("embedder returned " + std::to_string(out.size()) + " embeddings for " +
                      std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : out) {
    if (v.size() != dim_ || !all_finite(v)) {
      throw ClientError("embedder returned a vector of wrong size or with non-finite values");
    }
  }
  return out;
}

std::string llm_request_key(const std::vector<ChatMessage>& messages) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(messages_json(messages).dump())));
  return buf;
}

void write_llm_exchange(const std::filesystem::path& log_dir,
                        const std::vector<ChatMessage>& messages, const std::string& response) {
  std::filesystem::create_directories(log_dir);
  const json record = {{"messages", messages_json(messages)}, {"response", response}};
  std::ofstream out(log_dir / (llm_request_key(messages) + ".json"), std::ios::trunc);
  out << record.dump(2) << '\n';
  if (!out) throw ClientError("cannot write LLM log in " + log_dir.string());
}

HttpLlmClient::HttpLlmClient(HttpLlmConfig config) : config_(std::move(config)) {
  if (config_.max_concurrency == 0) {
    throw InvalidArgument("HttpLlmClient: max_concurrency must be >= 1");
  }
}

std::size_t HttpLlmClient::attempts() const {
  std::lock_guard lock(mutex_);
  return attempts_;
}

std::string HttpLlmClient::complete(const std::vector<ChatMessage>& messages) {
  {
    std::unique_lock lock(mutex_);
    slot_free_.wait(lock, [&] { return in_flight_ < config_.max_concurrency; });
    ++in_flight_;
  }
  struct Release {
    HttpLlmClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mutex_);
        --self->in_flight_;
      }
      self->slot_free_.notify_one();
    }
  } release{this};

  json body = {{"model", config_.model}, {"messages", messages_json(messages)},
               {"temperature", 0}};
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string last_error = "no attempt made";
  double backoff = config_.backoff_seconds;
  for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    {
      std::lock_guard lock(mutex_);
      ++attempts_;
    }
    auto client = make_client(config_.endpoint);
    const auto res = client->Post(config_.endpoint.path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ClientError("LLM returned HTTP " + std::to_string(res->status));
    std::string content;
    try {
      content = json::parse(res->body)
                    .at("choices")
                    .at(0)
                    .at("message")
                    .at("content")
                    .get<std::string>();
    } catch (const json::exception& e) {
      throw ClientError(std::string("LLM response malformed: ") + e.what());
    }
    if (config_.log_dir) write_llm_exchange(*config_.log_dir, messages, content);
    return content;
  }
  throw ClientError("LLM request failed after " + std::to_string(config_.max_retries + 1) +
                    " attempts: " + last_error);
}

ReplayLlmClient::ReplayLlmClient(std::filesystem::path log_dir) : log_dir_(std::move(log_dir)) {}

std::string ReplayLlmClient::complete(const std::vector<ChatMessage>& messages) {
  const auto path = log_dir_ / (llm_request_key(messages) + ".json");
  std::ifstream in(path);
  if (!in) throw ClientError("no recorded LLM exchange at " + path.string());
  try {
    return json::parse(in).at("response").get<std::string>();
  } catch (const json::exception& e) {
    throw ClientError("recorded LLM exchange unreadable: " + std::string(e.what()));
  }
}

}  // namespace embscope
