// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "embscope/numerics.hpp"
#include "embscope/losses.hpp"
#include "embscope/sae.hpp"

namespace embscope::testing {

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n,
                                           double sigma = 1.0) {
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

/// Every parameter drawn from N(0, sigma).
inline SaeParams random_params(std::mt19937_64& rng, std::size_t d, std::size_t n,
                               std::size_t k, double sigma = 0.5) {
  SaeParams p(d, n, k);
  for (auto block : p.blocks()) {
    std::normal_distribution<double> g(0.0, sigma);
    for (auto& x : block) x = g(rng);
  }
  return p;
}

/// Forward pass with a given active set instead of TopK; written from the
/// model definition without touching the library's encode/decode.
inline std::vector<double> masked_reconstruct(const SaeParams& p, const std::vector<double>& x,
                                              const std::vector<std::uint32_t>& support) {
  std::vector<double> xhat(p.decoder_bias.begin(), p.decoder_bias.end());
  for (auto j : support) {
    double z = p.encoder_bias[j];
    for (std::size_t i = 0; i < p.input_dim; ++i) {
      z += p.encoder(j, i) * (x[i] - p.decoder_bias[i]);
    }
    for (std::size_t i = 0; i < p.input_dim; ++i) xhat[i] += p.decoder(j, i) * z;
  }
  return xhat;
}

inline std::vector<std::uint32_t> support_of(const SparseLatent& h) {
  std::vector<std::uint32_t> s;
  for (const auto& e : h.entries()) s.push_back(e.index);
  return s;
}

/// One query with its positives, owned.
struct OwnedGroup {
  std::vector<double> query;
  std::vector<std::vector<double>> positives;
};

inline std::vector<QueryGroup> as_views(const std::vector<OwnedGroup>& groups) {
  std::vector<QueryGroup> out;
  for (const auto& g : groups) {
    QueryGroup v;
    v.query = g.query;
    for (const auto& d : g.positives) v.positives.emplace_back(d);
    out.push_back(std::move(v));
  }
  return out;
}

inline double softmax_kl(const std::vector<double>& s, const std::vector<double>& t) {
  const double ms = *std::max_element(s.begin(), s.end());
  const double mt = *std::max_element(t.begin(), t.end());
  double zs = 0.0, zt = 0.0;
  for (double v : s) zs += std::exp(v - ms);
  for (double v : t) zt += std::exp(v - mt);
  double kl = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double log_p = s[j] - ms - std::log(zs);
    const double log_q = t[j] - mt - std::log(zt);
    kl += std::exp(log_p) * (log_p - log_q);
  }
  return kl;
}

/// Mean per-embedding MSE over every embedding plus `lambda` times the mean
/// KL over queries with positives, with each embedding's active set frozen to
/// `supports` (queries first, then their positives, group by group).
inline double masked_objective(const SaeParams& p, const std::vector<OwnedGroup>& groups,
                               const std::vector<std::vector<std::uint32_t>>& supports,
                               double lambda) {
  std::size_t slot = 0;
  double mse_sum = 0.0;
  std::size_t embeddings = 0;
  double kl_sum = 0.0;
  std::size_t kl_queries = 0;
  auto mse = [&](const std::vector<double>& x, const std::vector<double>& xhat) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (xhat[i] - x[i]) * (xhat[i] - x[i]);
    return s / static_cast<double>(x.size());
  };
  auto dotv = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  for (const auto& g : groups) {
    const auto qhat = masked_reconstruct(p, g.query, supports[slot++]);
    mse_sum += mse(g.query, qhat);
    ++embeddings;
    std::vector<double> s, t;
    for (const auto& d : g.positives) {
      const auto dhat = masked_reconstruct(p, d, supports[slot++]);
      mse_sum += mse(d, dhat);
      ++embeddings;
      s.push_back(dotv(g.query, d));
      t.push_back(dotv(qhat, dhat));
    }
    if (!s.empty()) {
      kl_sum += softmax_kl(s, t);
      ++kl_queries;
    }
  }
  double total = mse_sum / static_cast<double>(embeddings);
  if (kl_queries > 0) total += lambda * kl_sum / static_cast<double>(kl_queries);
  return total;
}

/// Largest relative error |a - n| / max(|a|, |n|, floor) between analytic
/// gradients and central differences of masked_objective, over every
/// parameter of `p`.
inline double gradient_relative_error(const SaeParams& p, const std::vector<OwnedGroup>& groups,
                                      double lambda, double step = 1e-5, double floor = 1e-6) {
  std::vector<std::vector<std::uint32_t>> supports;
  for (const auto& g : groups) {
    supports.push_back(support_of(encode(p, g.query)));
    for (const auto& d : g.positives) supports.push_back(support_of(encode(p, d)));
  }
  const auto views = as_views(groups);
  const auto analytic = combined_loss(views, p, lambda, 1);
  SaeParams probe = p;
  double worst = 0.0;
  auto probe_blocks = probe.blocks();
  const auto grad_blocks = analytic.grads.blocks();
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < probe_blocks[b].size(); ++i) {
      const double saved = probe_blocks[b][i];
      probe_blocks[b][i] = saved + step;
      const double up = masked_objective(probe, groups, supports, lambda);
      probe_blocks[b][i] = saved - step;
      const double down = masked_objective(probe, groups, supports, lambda);
      probe_blocks[b][i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = grad_blocks[b][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

/// Random micro-batch of `queries` groups with `positives` each.
inline std::vector<OwnedGroup> random_groups(std::mt19937_64& rng, std::size_t d,
                                             std::size_t queries, std::size_t positives) {
  std::vector<OwnedGroup> groups(queries);
  for (auto& g : groups) {
    g.query = gaussian_vector(rng, d);
    for (std::size_t j = 0; j < positives; ++j) g.positives.push_back(gaussian_vector(rng, d));
  }
  return groups;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("embscope_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace embscope::testing
