// SPDX-License-Identifier: Apache-2.0
#include "embscope/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "embscope/control.hpp"
#include "embscope/error.hpp"
#include "embscope/fidelity.hpp"
#include "embscope/interpret.hpp"
#include "embscope/retrieval.hpp"
#include "httplib.h"

namespace embscope {

namespace {

using nlohmann::json;

constexpr std::size_t kFeatureTopDocs = 5;

ApiResponse error_response(int status, const std::string& detail) {
  const char* error = status == 404 ? "not_found" : status == 400 ? "bad_request" : "error";
  return {status, json{{"error", error}, {"detail", detail}}};
}

std::optional<std::uint64_t> parse_index(const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return v;
}

}  // namespace

SparseLatent apply_edits(const SparseLatent& base,
                         const std::vector<std::pair<std::uint32_t, double>>& edits) {
  SparseLatent h = base;
  for (const auto& [f, d] : edits) h = amplify(h, f, d);
  return h;
}

std::shared_ptr<const ServiceModel> make_service_model(
    SaeParams params, std::string checkpoint, EmbeddingStore queries,
    const EmbeddingStore& corpus, std::unordered_map<std::string, std::string> doc_texts,
    std::vector<FeatureExplanation> explanations, std::shared_ptr<EmbedderClient> embedder,
    std::size_t top_k, std::size_t threads) {
  if (top_k == 0) throw InvalidArgument("service: top_k must be >= 1");
  params.validate();
  if (corpus.dim() != params.input_dim) {
    throw InvalidArgument("service: corpus dimension does not match the model");
  }
  if (!queries.empty() && queries.dim() != params.input_dim) {
    throw InvalidArgument("service: query dimension does not match the model");
  }
  if (embedder && embedder->dim() != params.input_dim) {
    throw InvalidArgument("service: embedder dimension does not match the model");
  }
  auto model = std::make_shared<ServiceModel>();
  model->corpus_latents = encode_store(params, corpus, threads);
  model->corpus_hat = decode_store(params, corpus, model->corpus_latents);
  model->feature_counts.assign(params.latent_dim, 0);
  for (const auto& h : model->corpus_latents) {
    for (const auto& e : h.entries()) model->feature_counts[e.index] += e.activation != 0.0;
  }
  for (auto& e : explanations) {
    const auto f = e.feature;
    model->explanations[f] = std::move(e);
  }
  model->params = std::move(params);
  model->checkpoint = std::move(checkpoint);
  model->queries = std::move(queries);
  model->doc_texts = std::move(doc_texts);
  model->embedder = std::move(embedder);
  model->top_k = top_k;
  return model;
}

SteeringService::SteeringService(std::shared_ptr<const ServiceModel> model,
                                 std::chrono::seconds idle_ttl, Clock clock)
    : model_(std::move(model)), idle_ttl_(idle_ttl), clock_(std::move(clock)) {
  if (!model_) throw InvalidArgument("SteeringService: model required");
  doc_rank_ = lexical_ranks(model_->corpus_hat.ids());
  const auto& counts = model_->feature_counts;
  std::vector<std::uint32_t> order;
  for (std::uint32_t f = 0; f < counts.size(); ++f) {
    if (counts[f] > 0) order.push_back(f);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return counts[a] > counts[b]; });
  frequency_rank_.assign(counts.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) frequency_rank_[order[r]] = r + 1;
  active_features_ = order.size();
}

std::size_t SteeringService::expire_idle() {
  const auto now = clock_();
  std::lock_guard lock(sessions_mutex_);
  return std::erase_if(sessions_, [&](const auto& kv) {
    std::lock_guard session_lock(kv.second->mutex);
    return now - kv.second->last_access > idle_ttl_;
  });
}

std::size_t SteeringService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<SteeringService::Session> SteeringService::lookup(const std::string& id) {
  expire_idle();
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

json SteeringService::session_view(const std::string& id, const Session& session) const {
  const auto& m = *model_;
  const auto h = apply_edits(session.base, session.edits);
  std::map<std::uint32_t, double> applied;
  for (const auto& [f, d] : session.edits) applied[f] += d;

  auto entries = h.entries();
  std::stable_sort(entries.begin(), entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
    return a.activation > b.activation;
  });
  json features = json::array();
  for (const auto& e : entries) {
    const auto exp = m.explanations.find(e.index);
    const auto delta = applied.find(e.index);
    features.push_back({{"index", e.index},
                        {"activation", e.activation},
                        {"summary", exp == m.explanations.end() ? "" : exp->second.summary},
                        {"delta", delta == applied.end() ? 0.0 : delta->second},
                        {"frequency_rank", frequency_rank_[e.index] == 0
                                               ? json(nullptr)
                                               : json(frequency_rank_[e.index])}});
  }

  const auto xhat = decode(m.params, h);
  const auto run = dense_retrieve_one(session.query_ref, xhat.span(), m.corpus_hat, doc_rank_,
                                      m.top_k);
  json results = json::array();
  for (const auto& r : run.results) {
    const auto text = m.doc_texts.find(r.doc_id);
    results.push_back({{"doc_id", r.doc_id},
                       {"score", r.score},
                       {"snippet", text == m.doc_texts.end() ? "" : make_snippet(text->second)}});
  }
  json edits = json::array();
  for (const auto& [f, d] : session.edits) edits.push_back({{"feature", f}, {"delta", d}});
  return {{"session_id", id}, {"query", session.query_ref}, {"features", std::move(features)},
          {"results", std::move(results)}, {"edits", std::move(edits)}};
}

ApiResponse SteeringService::create_session(const std::string& body) {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(400, std::string("body is not JSON: ") + e.what());
  }
  if (!req.is_object()) return error_response(400, "body must be a JSON object");
  const bool has_text = req.contains("query_text");
  const bool has_id = req.contains("query_id");
  if (has_text == has_id) return error_response(400, "exactly one of query_text, query_id required");

  const auto& m = *model_;
  auto session = std::make_shared<Session>();
  if (has_id) {
    if (!req["query_id"].is_string()) return error_response(400, "query_id must be a string");
    const auto qid = req["query_id"].get<std::string>();
    const auto row = m.queries.find(qid);
    if (!row) return error_response(404, "unknown query_id '" + qid + "'");
    session->query_ref = qid;
    session->base = encode(m.params, m.queries.row(*row));
  } else {
    if (!req["query_text"].is_string()) return error_response(400, "query_text must be a string");
    if (!m.embedder) return error_response(400, "query_text needs an embedder; none configured");
    const auto text = req["query_text"].get<std::string>();
    if (text.empty()) return error_response(400, "query_text is empty");
    try {
      const auto emb = m.embedder->embed({text});
      if (emb.size() != 1 || emb[0].size() != m.params.input_dim) {
        return error_response(502, "embedder returned an unexpected shape");
      }
      session->base = encode(m.params, emb[0]);
    } catch (const ClientError& e) {
      return error_response(502, e.what());
    }
    session->query_ref = text;
  }
  session->last_access = clock_();
  expire_idle();
  std::string id;
  {
    std::lock_guard lock(sessions_mutex_);
    id = "s" + std::to_string(next_id_++);
    sessions_.emplace(id, session);
  }
  std::lock_guard session_lock(session->mutex);
  return {200, session_view(id, *session)};
}

ApiResponse SteeringService::steer(const std::string& session_id, const std::string& body) {
  auto session = lookup(session_id);
  if (!session) return error_response(404, "unknown session '" + session_id + "'");
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(400, std::string("body is not JSON: ") + e.what());
  }
  if (!req.is_object() || !req.contains("feature") || !req.contains("delta") ||
      !req["feature"].is_number_integer() || !req["delta"].is_number()) {
    return error_response(400, "body must be {\"feature\": integer, \"delta\": number}");
  }
  const auto feature = req["feature"].get<std::int64_t>();
  const auto delta = req["delta"].get<double>();
  if (feature < 0 || static_cast<std::uint64_t>(feature) >= model_->params.latent_dim) {
    return error_response(404, "unknown feature " + std::to_string(feature));
  }
  if (!std::isfinite(delta)) return error_response(400, "delta must be finite");

  std::lock_guard lock(session->mutex);
  session->edits.emplace_back(static_cast<std::uint32_t>(feature), delta);
  session->last_access = clock_();
  return {200, session_view(session_id, *session)};
}

ApiResponse SteeringService::remove_edit(const std::string& session_id,
                                         const std::string& edit_index) {
  auto session = lookup(session_id);
  if (!session) return error_response(404, "unknown session '" + session_id + "'");
  const auto idx = parse_index(edit_index);
  if (!idx) return error_response(400, "edit index must be a non-negative integer");
  std::lock_guard lock(session->mutex);
  if (*idx >= session->edits.size()) {
    return error_response(404, "no edit " + edit_index + " in session '" + session_id + "'");
  }
  session->edits.erase(session->edits.begin() + static_cast<std::ptrdiff_t>(*idx));
  session->last_access = clock_();
  return {200, session_view(session_id, *session)};
}

ApiResponse SteeringService::feature(const std::string& index) {
  const auto& m = *model_;
  const auto idx = parse_index(index);
  if (!idx) return error_response(400, "feature index must be a non-negative integer");
  if (*idx >= m.params.latent_dim) return error_response(404, "unknown feature " + index);
  const auto f = static_cast<std::uint32_t>(*idx);

  json top = json::array();
  for (const auto& hit :
       top_activating_docs(f, m.corpus_hat.ids(), m.corpus_latents, kFeatureTopDocs)) {
    const auto text = m.doc_texts.find(hit.doc_id);
    top.push_back({{"doc_id", hit.doc_id},
                   {"activation", hit.score},
                   {"snippet", text == m.doc_texts.end() ? "" : make_snippet(text->second)}});
  }
  const auto exp = m.explanations.find(f);
  json body = {{"index", f},
               {"summary", exp == m.explanations.end() ? "" : exp->second.summary},
               {"source", exp == m.explanations.end() ? json(nullptr)
                                                      : json(to_string(exp->second.source))},
               {"frequency_count", m.feature_counts[f]},
               {"frequency_rank", frequency_rank_[f] == 0 ? json(nullptr) : json(frequency_rank_[f])},
               {"active_features", active_features_},
               {"top_documents", std::move(top)}};
  return {200, std::move(body)};
}

ApiResponse SteeringService::health() {
  const auto& m = *model_;
  return {200, json{{"status", "ok"},
                    {"checkpoint", m.checkpoint},
                    {"input_dim", m.params.input_dim},
                    {"latent_dim", m.params.latent_dim},
                    {"k", m.params.k},
                    {"documents", m.corpus_hat.size()},
                    {"queries", m.queries.size()},
                    {"explanations", m.explanations.size()},
                    {"top_k", m.top_k},
                    {"embedder", static_cast<bool>(m.embedder)},
                    {"sessions", session_count()}}};
}

void bind_routes(httplib::Server& server, SteeringService& service) {
  const auto reply = [](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
  };
  server.Post("/sessions", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.create_session(req.body));
  });
  server.Post(R"(/sessions/([^/]+)/steer)",
              [&service, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, service.steer(req.matches[1], req.body));
              });
  server.Delete(R"(/sessions/([^/]+)/steer/([^/]+))",
                [&service, reply](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service.remove_edit(req.matches[1], req.matches[2]));
                });
  server.Get(R"(/features/([^/]+))",
             [&service, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, service.feature(req.matches[1]));
             });
  server.Get("/healthz", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.health());
  });
  server.set_exception_handler(
      [reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string detail = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          detail = e.what();
        } catch (...) {
        }
        reply(res, ApiResponse{500, json{{"error", "internal"}, {"detail", detail}}});
      });
  server.set_error_handler([reply](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      reply(res, error_response(404, "no route for " + req.method + " " + req.path));
    }
  });
}

}  // namespace embscope
