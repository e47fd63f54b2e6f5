// SPDX-License-Identifier: Apache-2.0
//
// Hermetic stand-in for a retrieval corpus: every embedding is a unit-norm,
// exactly k_true-sparse nonnegative combination of atoms from a random
// dictionary, plus clipped Gaussian noise. Atom usage follows a Zipf law.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "embscope/numerics.hpp"
#include "embscope/qrels.hpp"
#include "embscope/sae.hpp"
#include "embscope/store.hpp"

namespace embscope {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::uint32_t d = 64;
  std::uint32_t n_true = 256;
  std::uint32_t k_true = 4;
  std::uint32_t n_queries = 200;
  std::uint32_t docs_per_query = 5;
  std::uint32_t n_distractors = 2000;
  double noise_sigma = 0.01;
  double zipf_exponent = 1.1;
};

/// Planted code of one embedding (coefficients already include the
/// unit-norm scaling).
struct SparseCode {
  std::vector<std::uint32_t> atoms;
  std::vector<double> coefficients;
};

struct SyntheticBenchmark {
  SynthConfig config;
  Matrix dictionary;                    // n_true x d, unit-norm rows
  std::vector<std::uint32_t> atom_rank;  // atom -> popularity rank (0 = most used)
  EmbeddingStore queries;
  EmbeddingStore corpus;
  QrelSet qrels;
  std::vector<SparseCode> query_codes;  // by query row
  std::vector<SparseCode> doc_codes;    // by corpus row; atoms double as cluster labels
  std::vector<std::string> doc_texts;   // one pseudo-word per atom, e.g. "atom17"
  /// Per-query perspective atom pair; empty unless built by
  /// generate_perspective_benchmark.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> perspectives;

  /// L2 bound on the additive noise of any embedding (3 sigma sqrt(d)).
  double noise_bound() const;
};

SyntheticBenchmark generate_synthetic(const SynthConfig& config);

struct PerspectiveConfig {
  std::uint64_t seed = 0;
  std::uint32_t d = 64;
  std::uint32_t n_true = 256;
  std::uint32_t k_true = 4;
  std::uint32_t n_queries = 50;
  std::uint32_t docs_per_side = 10;
  std::uint32_t n_distractors = 1000;
  double noise_sigma = 0.01;
  double zipf_exponent = 1.1;
  double perspective_boost = 3.0;  // coefficient multiplier of perspective atoms
};

/// Binary-perspective corpus. Each query owns two reserved atoms (a, b) that
/// no other embedding uses; it mixes both, half of its relevant documents
/// contain a (not b) and the other half b (not a). Reserved atoms carry a
/// coefficient scaled by perspective_boost.
SyntheticBenchmark generate_perspective_benchmark(const PerspectiveConfig& config);

/// Largest residual norm of any embedding after least-squares projection onto
/// the span of its recorded atoms.
double max_planted_residual(const SyntheticBenchmark& bench);
/// True when every residual is within noise_bound() (+ rounding slack).
bool verify_synthetic(const SyntheticBenchmark& bench);

/// SAE whose decoder columns are the dictionary atoms (encoder = dictionary,
/// zero biases). Needs latent_dim == n_true.
SaeParams dictionary_params(const SyntheticBenchmark& bench, std::size_t k);
/// Planted code as a latent of the dictionary model.
SparseLatent planted_latent(const SparseCode& code, std::size_t n_true);

/// Zipf rank-frequency weights r^-s for ranks 1..n, normalized.
std::vector<double> zipf_weights(std::size_t n, double exponent);

}  // namespace embscope
