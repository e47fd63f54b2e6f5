// SPDX-License-Identifier: Apache-2.0
//
// Interactive steering API. SteeringService holds the request logic and maps
// each call to (status, JSON body); bind_routes exposes it over HTTP.
#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "embscope/clients.hpp"
#include "embscope/sae.hpp"
#include "embscope/store.hpp"
#include "embscope/trie.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace embscope {

/// Read-only state shared by all sessions.
struct ServiceModel {
  SaeParams params;
  std::string checkpoint;  // path or label reported by /healthz
  EmbeddingStore queries;  // may be empty; needed for query_id sessions
  EmbeddingStore corpus_hat;
  std::vector<SparseLatent> corpus_latents;
  std::unordered_map<std::string, std::string> doc_texts;
  std::map<std::uint32_t, FeatureExplanation> explanations;
  std::vector<std::uint64_t> feature_counts;
  std::shared_ptr<EmbedderClient> embedder;  // optional; needed for query_text sessions
  std::size_t top_k = 5;
};

/// Encodes and decodes the corpus once, counts feature usage, and packages
/// everything the service needs.
std::shared_ptr<const ServiceModel> make_service_model(
    SaeParams params, std::string checkpoint, EmbeddingStore queries,
    const EmbeddingStore& corpus, std::unordered_map<std::string, std::string> doc_texts,
    std::vector<FeatureExplanation> explanations, std::shared_ptr<EmbedderClient> embedder,
    std::size_t top_k = 5, std::size_t threads = 1);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

class SteeringService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  explicit SteeringService(std::shared_ptr<const ServiceModel> model,
                           std::chrono::seconds idle_ttl = std::chrono::hours(1),
                           Clock clock = std::chrono::steady_clock::now);

  ApiResponse create_session(const std::string& body);
  ApiResponse steer(const std::string& session_id, const std::string& body);
  ApiResponse remove_edit(const std::string& session_id, const std::string& edit_index);
  ApiResponse feature(const std::string& index);
  ApiResponse health();

  /// Drops sessions idle for longer than the TTL; returns how many.
  std::size_t expire_idle();
  std::size_t session_count() const;

 private:
  struct Session {
    std::mutex mutex;
    std::string query_ref;
    SparseLatent base;
    std::vector<std::pair<std::uint32_t, double>> edits;
    std::chrono::steady_clock::time_point last_access;
  };

  std::shared_ptr<Session> lookup(const std::string& id);
  nlohmann::json session_view(const std::string& id, const Session& session) const;

  std::shared_ptr<const ServiceModel> model_;
  std::vector<std::uint32_t> doc_rank_;
  std::vector<std::size_t> frequency_rank_;  // 0 when the feature never fires
  std::size_t active_features_ = 0;
  std::chrono::seconds idle_ttl_;
  Clock clock_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// Replays an edit list on a base latent with amplify, in order.
SparseLatent apply_edits(const SparseLatent& base,
                         const std::vector<std::pair<std::uint32_t, double>>& edits);

void bind_routes(httplib::Server& server, SteeringService& service);

}  // namespace embscope
