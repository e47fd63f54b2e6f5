// SPDX-License-Identifier: Apache-2.0
//
// k-sparse autoencoder:
//   h     = TopK(W_enc (x - b_dec) + b_enc)
//   x_hat = W_dec h + b_dec
// Activations are selected by raw value, so they may be negative.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "embscope/numerics.hpp"

namespace embscope {

struct SparseEntry {
  std::uint32_t index;
  double activation;
  bool operator==(const SparseEntry&) const = default;
};

/// Sparse latent code. Entries are kept sorted by index with no duplicates.
class SparseLatent {
 public:
  SparseLatent() = default;
  explicit SparseLatent(std::size_t latent_dim) : latent_dim_(latent_dim) {}
  /// Validates ordering, range and finiteness.
  SparseLatent(std::size_t latent_dim, std::vector<SparseEntry> entries);

  std::size_t latent_dim() const noexcept { return latent_dim_; }
  const std::vector<SparseEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  /// Number of entries with a nonzero activation.
  std::size_t nnz() const noexcept;
  /// Activation of `feature`, 0 when absent.
  double activation(std::uint32_t feature) const noexcept;
  /// Full n-dimensional vector with zeros off the support.
  std::vector<double> to_dense() const;

  bool operator==(const SparseLatent&) const = default;

 private:
  std::size_t latent_dim_ = 0;
  std::vector<SparseEntry> entries_;
};

/// Weights of the autoencoder. The decoder is stored column-wise: row j of
/// `decoder` is column j of W_dec, so decoding touches only active columns.
struct SaeParams {
  std::size_t input_dim = 0;   // d
  std::size_t latent_dim = 0;  // n
  std::size_t k = 0;
  Matrix encoder;             // n x d  (W_enc)
  std::vector<double> encoder_bias;  // n
  Matrix decoder;             // n x d  (W_dec transposed)
  std::vector<double> decoder_bias;  // d

  SaeParams() = default;
  /// Zero-initialized parameters; throws if k is 0 or exceeds latent_dim.
  SaeParams(std::size_t input_dim, std::size_t latent_dim, std::size_t k);

  std::span<const double> decoder_column(std::uint32_t feature) const {
    return decoder.row(feature);
  }
  /// Throws InvalidArgument when shapes disagree or any entry is non-finite.
  void validate() const;

  /// The four parameter blocks in a fixed order: encoder, encoder_bias,
  /// decoder, decoder_bias.
  std::array<std::span<double>, 4> blocks();
  std::array<std::span<const double>, 4> blocks() const;

  bool operator==(const SaeParams&) const = default;
};

/// Gradient buffers shaped like SaeParams.
struct SaeGradients {
  Matrix encoder;
  std::vector<double> encoder_bias;
  Matrix decoder;
  std::vector<double> decoder_bias;

  SaeGradients() = default;
  explicit SaeGradients(const SaeParams& like);
  void zero();
  void add(const SaeGradients& other);
  std::array<std::span<double>, 4> blocks();
  std::array<std::span<const double>, 4> blocks() const;
};

/// Decoder columns ~ N(0, 1) normalized to unit L2 norm, encoder = decoder^T,
/// encoder bias 0, decoder bias = mean of `sample` (0 when empty).
SaeParams initialize_params(std::size_t input_dim, std::size_t latent_dim, std::size_t k,
                            std::span<const std::span<const double>> sample,
                            std::uint64_t seed);

/// z = W_enc (x - b_dec) + b_enc for all n features.
std::vector<double> pre_activations(const SaeParams& params, std::span<const double> x);

SparseLatent encode(const SaeParams& params, std::span<const double> x);
DenseVector decode(const SaeParams& params, const SparseLatent& h);

struct Reconstruction {
  SparseLatent latent;
  DenseVector xhat;
};
Reconstruction reconstruct(const SaeParams& params, std::span<const double> x);

/// Accumulates d(loss)/d(params) into `grads` for one example, given
/// d(loss)/d(x_hat). The TopK support of `h` is treated as fixed. Returns
/// d(loss)/d(x).
DenseVector accumulate_backward(const SaeParams& params, std::span<const double> x,
                                const SparseLatent& h, std::span<const double> grad_xhat,
                                SaeGradients& grads);

struct BackwardResult {
  SaeGradients grads;
  DenseVector grad_x;
};
BackwardResult backward(const SaeParams& params, std::span<const double> x,
                        const SparseLatent& h, std::span<const double> grad_xhat);

}  // namespace embscope
