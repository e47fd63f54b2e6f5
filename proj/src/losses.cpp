// SPDX-License-Identifier: Apache-2.0
#include "embscope/losses.hpp"

#include <algorithm>
#include <cmath>

#include "embscope/error.hpp"

namespace embscope {

namespace {

std::vector<double> log_softmax(std::span<const double> s) {
  const double mx = *std::max_element(s.begin(), s.end());
  double sum = 0.0;
  for (double v : s) sum += std::exp(v - mx);
  const double log_sum = std::log(sum);
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - mx) - log_sum;
  return out;
}

}  // namespace

LossWithGrad mse_loss(std::span<const double> x, std::span<const double> xhat) {
  if (x.size() != xhat.size()) throw InvalidArgument("mse_loss: length mismatch");
  if (x.empty()) throw InvalidArgument("mse_loss: empty input");
  const double inv_d = 1.0 / static_cast<double>(x.size());
  std::vector<double> grad(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = xhat[i] - x[i];
    sum += diff * diff;
    grad[i] = 2.0 * diff * inv_d;
  }
  return {sum * inv_d, DenseVector(std::move(grad))};
}

std::vector<double> positive_softmax(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("positive_softmax: empty input");
  if (!all_finite(scores)) throw InvalidArgument("positive_softmax: non-finite score");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

KldResult kld_loss(std::span<const double> q, std::span<const std::span<const double>> docs,
                   std::span<const double> qhat,
                   std::span<const std::span<const double>> docs_hat) {
  if (docs.empty()) throw InvalidArgument("kld_loss: no positive documents");
  if (docs.size() != docs_hat.size()) throw InvalidArgument("kld_loss: document count mismatch");
  const std::size_t d = q.size();
  if (qhat.size() != d) throw InvalidArgument("kld_loss: query dimension mismatch");
  for (std::size_t j = 0; j < docs.size(); ++j) {
    if (docs[j].size() != d || docs_hat[j].size() != d) {
      throw InvalidArgument("kld_loss: document dimension mismatch");
    }
  }

  const std::size_t m = docs.size();
  std::vector<double> scores(m), scores_hat(m);
  for (std::size_t j = 0; j < m; ++j) {
    scores[j] = dot(q, docs[j]);
    scores_hat[j] = dot(qhat, docs_hat[j]);
  }
  const auto log_p = log_softmax(scores);
  const auto log_p_hat = log_softmax(scores_hat);

  KldResult r;
  std::vector<double> grad_scores(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double p = std::exp(log_p[j]);
    r.value += p * (log_p[j] - log_p_hat[j]);
    grad_scores[j] = std::exp(log_p_hat[j]) - p;
  }

  std::vector<double> gq(d, 0.0);
  r.grad_docs_hat.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> gd(d);
    for (std::size_t i = 0; i < d; ++i) {
      gq[i] += grad_scores[j] * docs_hat[j][i];
      gd[i] = grad_scores[j] * qhat[i];
    }
    r.grad_docs_hat.emplace_back(std::move(gd));
  }
  r.grad_qhat = DenseVector(std::move(gq));
  return r;
}

namespace {

struct WorkerAccum {
  double mse_sum = 0.0;
  double kld_sum = 0.0;
  SaeGradients grads;
  std::vector<std::uint32_t> hits;
};

}  // namespace

CombinedLoss combined_loss(std::span<const QueryGroup> batch, const SaeParams& params,
                           double kld_weight, std::size_t threads) {
  if (kld_weight < 0.0) throw InvalidArgument("combined_loss: kld_weight must be >= 0");
  CombinedLoss out;
  for (const auto& g : batch) {
    out.embeddings += 1 + g.positives.size();
    if (g.positives.empty()) {
      ++out.skipped_queries;
    } else {
      ++out.kld_queries;
    }
  }
  out.grads = SaeGradients(params);
  out.feature_hits.assign(params.latent_dim, 0);
  if (out.embeddings == 0) return out;

  const double mse_scale = 1.0 / static_cast<double>(out.embeddings);
  const double kld_scale =
      out.kld_queries > 0 ? kld_weight / static_cast<double>(out.kld_queries) : 0.0;

  const std::size_t workers = worker_count(batch.size(), threads);
  std::vector<WorkerAccum> accum(workers);
  parallel_chunks(batch.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t w) {
    auto& acc = accum[w];
    acc.grads = SaeGradients(params);
    acc.hits.assign(params.latent_dim, 0);
    for (std::size_t gi = begin; gi < end; ++gi) {
      const auto& group = batch[gi];
      const std::size_t m = group.positives.size();

      // Index 0 is the query, 1..m the positives.
      std::vector<std::span<const double>> xs;
      xs.reserve(m + 1);
      xs.push_back(group.query);
      xs.insert(xs.end(), group.positives.begin(), group.positives.end());

      std::vector<Reconstruction> recs;
      recs.reserve(xs.size());
      for (const auto& x : xs) {
        recs.push_back(reconstruct(params, x));
        for (const auto& e : recs.back().latent.entries()) ++acc.hits[e.index];
      }

      std::vector<std::vector<double>> grad_xhat(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) {
        auto l = mse_loss(xs[i], recs[i].xhat);
        acc.mse_sum += l.value;
        grad_xhat[i].assign(l.grad.begin(), l.grad.end());
        for (auto& v : grad_xhat[i]) v *= mse_scale;
      }

      if (m > 0) {
        std::vector<std::span<const double>> docs_hat;
        docs_hat.reserve(m);
        for (std::size_t j = 1; j <= m; ++j) docs_hat.push_back(recs[j].xhat.span());
        auto k = kld_loss(group.query, group.positives, recs[0].xhat, docs_hat);
        acc.kld_sum += k.value;
        if (kld_scale != 0.0) {
          for (std::size_t i = 0; i < k.grad_qhat.size(); ++i) {
            grad_xhat[0][i] += kld_scale * k.grad_qhat[i];
          }
          for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < k.grad_docs_hat[j].size(); ++i) {
              grad_xhat[j + 1][i] += kld_scale * k.grad_docs_hat[j][i];
            }
          }
        }
      }

      for (std::size_t i = 0; i < xs.size(); ++i) {
        accumulate_backward(params, xs[i], recs[i].latent, grad_xhat[i], acc.grads);
      }
    }
  });

  double mse_sum = 0.0, kld_sum = 0.0;
  for (auto& acc : accum) {
    if (acc.hits.empty()) continue;  // worker had no items
    mse_sum += acc.mse_sum;
    kld_sum += acc.kld_sum;
    out.grads.add(acc.grads);
    for (std::size_t j = 0; j < out.feature_hits.size(); ++j) out.feature_hits[j] += acc.hits[j];
  }
  out.mse = mse_sum * mse_scale;
  out.kld = out.kld_queries > 0 ? kld_sum / static_cast<double>(out.kld_queries) : 0.0;
  out.total = out.mse + kld_weight * out.kld;
  return out;
}

}  // namespace embscope
