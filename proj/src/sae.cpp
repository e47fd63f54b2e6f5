// SPDX-License-Identifier: Apache-2.0
#include "embscope/sae.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "embscope/error.hpp"

namespace embscope {

SparseLatent::SparseLatent(std::size_t latent_dim, std::vector<SparseEntry> entries)
    : latent_dim_(latent_dim), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.index >= latent_dim_) {
      throw InvalidArgument("sparse latent: feature " + std::to_string(e.index) +
                            " out of range for latent_dim " + std::to_string(latent_dim_));
    }
    if (i > 0 && entries_[i - 1].index >= e.index) {
      throw InvalidArgument("sparse latent: indices must be strictly increasing");
    }
    if (!std::isfinite(e.activation)) {
      throw InvalidArgument("sparse latent: non-finite activation");
    }
  }
}

std::size_t SparseLatent::nnz() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [](const SparseEntry& e) { return e.activation != 0.0; }));
}

double SparseLatent::activation(std::uint32_t feature) const noexcept {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), feature,
                             [](const SparseEntry& e, std::uint32_t f) { return e.index < f; });
  return (it != entries_.end() && it->index == feature) ? it->activation : 0.0;
}

std::vector<double> SparseLatent::to_dense() const {
  std::vector<double> out(latent_dim_, 0.0);
  for (const auto& e : entries_) out[e.index] = e.activation;
  return out;
}

SaeParams::SaeParams(std::size_t d, std::size_t n, std::size_t k_)
    : input_dim(d),
      latent_dim(n),
      k(k_),
      encoder(n, d),
      encoder_bias(n, 0.0),
      decoder(n, d),
      decoder_bias(d, 0.0) {
  if (d == 0 || n == 0) throw InvalidArgument("SaeParams: dimensions must be positive");
  if (k_ == 0 || k_ > n) {
    throw InvalidArgument("SaeParams: k must be in [1, latent_dim], got " + std::to_string(k_));
  }
}

void SaeParams::validate() const {
  if (k == 0 || k > latent_dim) throw InvalidArgument("SaeParams: k must be in [1, latent_dim]");
  if (encoder.rows() != latent_dim || encoder.cols() != input_dim ||
      decoder.rows() != latent_dim || decoder.cols() != input_dim ||
      encoder_bias.size() != latent_dim || decoder_bias.size() != input_dim) {
    throw InvalidArgument("SaeParams: inconsistent shapes");
  }
  for (auto b : blocks()) {
    if (!all_finite(b)) throw InvalidArgument("SaeParams: non-finite parameter");
  }
}

std::array<std::span<double>, 4> SaeParams::blocks() {
  return {encoder.flat(), std::span<double>(encoder_bias), decoder.flat(),
          std::span<double>(decoder_bias)};
}

std::array<std::span<const double>, 4> SaeParams::blocks() const {
  return {encoder.flat(), std::span<const double>(encoder_bias), decoder.flat(),
          std::span<const double>(decoder_bias)};
}

SaeGradients::SaeGradients(const SaeParams& like)
    : encoder(like.latent_dim, like.input_dim),
      encoder_bias(like.latent_dim, 0.0),
      decoder(like.latent_dim, like.input_dim),
      decoder_bias(like.input_dim, 0.0) {}

void SaeGradients::zero() {
  for (auto b : blocks()) std::fill(b.begin(), b.end(), 0.0);
}

void SaeGradients::add(const SaeGradients& other) {
  auto mine = blocks();
  auto theirs = other.blocks();
  for (std::size_t b = 0; b < mine.size(); ++b) {
    if (mine[b].size() != theirs[b].size()) throw InvalidArgument("SaeGradients: shape mismatch");
    for (std::size_t i = 0; i < mine[b].size(); ++i) mine[b][i] += theirs[b][i];
  }
}

std::array<std::span<double>, 4> SaeGradients::blocks() {
  return {encoder.flat(), std::span<double>(encoder_bias), decoder.flat(),
          std::span<double>(decoder_bias)};
}

std::array<std::span<const double>, 4> SaeGradients::blocks() const {
  return {encoder.flat(), std::span<const double>(encoder_bias), decoder.flat(),
          std::span<const double>(decoder_bias)};
}

SaeParams initialize_params(std::size_t d, std::size_t n, std::size_t k,
                            std::span<const std::span<const double>> sample,
                            std::uint64_t seed) {
  SaeParams p(d, n, k);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    auto col = p.decoder.row(j);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& v : col) {
        v = normal(rng);
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : col) v *= inv;
    std::copy(col.begin(), col.end(), p.encoder.row(j).begin());
  }
  if (!sample.empty()) {
    for (const auto& x : sample) {
      if (x.size() != d) throw InvalidArgument("initialize_params: sample dimension mismatch");
      for (std::size_t i = 0; i < d; ++i) p.decoder_bias[i] += x[i];
    }
    for (auto& v : p.decoder_bias) v /= static_cast<double>(sample.size());
  }
  return p;
}

std::vector<double> pre_activations(const SaeParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim) {
    throw InvalidArgument("encode: input has dimension " + std::to_string(x.size()) +
                          ", expected " + std::to_string(params.input_dim));
  }
  const std::size_t d = params.input_dim;
  std::vector<double> centered(d);
  for (std::size_t i = 0; i < d; ++i) centered[i] = x[i] - params.decoder_bias[i];
  std::vector<double> z(params.latent_dim);
  for (std::size_t j = 0; j < params.latent_dim; ++j) {
    z[j] = dot(params.encoder.row(j), centered) + params.encoder_bias[j];
  }
  return z;
}

SparseLatent encode(const SaeParams& params, std::span<const double> x) {
  const auto z = pre_activations(params, x);
  const auto top = topk_select(z, params.k);
  std::vector<SparseEntry> entries;
  entries.reserve(top.size());
  for (const auto& iv : top) entries.push_back({iv.index, iv.value});
  return SparseLatent(params.latent_dim, std::move(entries));
}

DenseVector decode(const SaeParams& params, const SparseLatent& h) {
  if (h.latent_dim() != params.latent_dim) {
    throw InvalidArgument("decode: latent_dim " + std::to_string(h.latent_dim()) +
                          " does not match model latent_dim " +
                          std::to_string(params.latent_dim));
  }
  std::vector<double> out(params.decoder_bias);
  for (const auto& e : h.entries()) {
    if (e.index >= params.latent_dim) throw InvalidArgument("decode: feature index out of range");
    const auto col = params.decoder_column(e.index);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += e.activation * col[i];
  }
  return DenseVector(std::move(out));
}

Reconstruction reconstruct(const SaeParams& params, std::span<const double> x) {
  auto latent = encode(params, x);
  auto xhat = decode(params, latent);
  return {std::move(latent), std::move(xhat)};
}

DenseVector accumulate_backward(const SaeParams& params, std::span<const double> x,
                                const SparseLatent& h, std::span<const double> grad_xhat,
                                SaeGradients& grads) {
  const std::size_t d = params.input_dim;
  if (x.size() != d || grad_xhat.size() != d) {
    throw InvalidArgument("backward: input or gradient dimension mismatch");
  }
  if (h.latent_dim() != params.latent_dim || h.size() > params.latent_dim) {
    throw InvalidArgument("backward: latent does not belong to these parameters");
  }
  if (grads.encoder.rows() != params.latent_dim || grads.encoder.cols() != d) {
    throw InvalidArgument("backward: gradient buffer shape mismatch");
  }

  std::vector<double> grad_x(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) grads.decoder_bias[i] += grad_xhat[i];

  for (const auto& e : h.entries()) {
    if (e.index >= params.latent_dim) throw InvalidArgument("backward: stale latent index");
    const auto j = e.index;
    const auto col = params.decoder_column(j);
    auto gcol = grads.decoder.row(j);
    for (std::size_t i = 0; i < d; ++i) gcol[i] += e.activation * grad_xhat[i];
    const double grad_h = dot(col, grad_xhat);
    if (grad_h == 0.0) continue;

    const auto enc_row = params.encoder.row(j);
    auto genc = grads.encoder.row(j);
    grads.encoder_bias[j] += grad_h;
    for (std::size_t i = 0; i < d; ++i) {
      genc[i] += grad_h * (x[i] - params.decoder_bias[i]);
      grad_x[i] += grad_h * enc_row[i];
      grads.decoder_bias[i] -= grad_h * enc_row[i];
    }
  }
  return DenseVector(std::move(grad_x));
}

BackwardResult backward(const SaeParams& params, std::span<const double> x,
                        const SparseLatent& h, std::span<const double> grad_xhat) {
  BackwardResult r{SaeGradients(params), {}};
  r.grad_x = accumulate_backward(params, x, h, grad_xhat, r.grads);
  return r;
}

}  // namespace embscope
