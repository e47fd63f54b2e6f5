// SPDX-License-Identifier: Apache-2.0
#include "embscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "embscope/error.hpp"

namespace embscope {

namespace {

class AtomSampler {
 public:
  AtomSampler(std::size_t n_true, double exponent, std::mt19937_64& rng) : rng_(rng) {
    const auto w = zipf_weights(n_true, exponent);
    cdf_.resize(n_true);
    std::partial_sum(w.begin(), w.end(), cdf_.begin());
    by_rank_.resize(n_true);
    std::iota(by_rank_.begin(), by_rank_.end(), 0u);
    std::shuffle(by_rank_.begin(), by_rank_.end(), rng_);
    rank_of_.resize(n_true);
    for (std::uint32_t r = 0; r < n_true; ++r) rank_of_[by_rank_[r]] = r;
  }

  std::uint32_t draw() {
    std::uniform_real_distribution<double> u(0.0, cdf_.back());
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u(rng_));
    const auto r = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()),
                                         cdf_.size() - 1);
    return by_rank_[r];
  }

  /// Extends `atoms` with distinct Zipf draws until it holds k atoms,
  /// never picking anything in `excluded`.
  void fill(std::vector<std::uint32_t>& atoms, std::size_t k,
            const std::vector<char>* banned = nullptr) {
    while (atoms.size() < k) {
      const auto a = draw();
      if (std::find(atoms.begin(), atoms.end(), a) != atoms.end()) continue;
      if (banned != nullptr && (*banned)[a]) continue;
      atoms.push_back(a);
    }
  }

  const std::vector<std::uint32_t>& rank_of() const { return rank_of_; }

 private:
  std::mt19937_64& rng_;
  std::vector<double> cdf_;
  std::vector<std::uint32_t> by_rank_;
  std::vector<std::uint32_t> rank_of_;
};

Matrix random_dictionary(std::size_t n_true, std::size_t d, std::mt19937_64& rng) {
  Matrix dict(n_true, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t a = 0; a < n_true; ++a) {
    auto row = dict.row(a);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& v : row) {
        v = normal(rng);
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : row) v *= inv;
  }
  return dict;
}

// Draws coefficients (multiplied by `boost` for atoms in `boosted`), scales
// the combination to unit norm and adds clipped noise. Returns the
// embedding; `code` receives the scaled coefficients.
std::vector<double> embed_code(const Matrix& dict, SparseCode& code, double sigma,
                               std::mt19937_64& rng, const std::vector<std::uint32_t>& boosted = {},
                               double boost = 1.0) {
  const std::size_t d = dict.cols();
  std::uniform_real_distribution<double> coef(0.5, 1.5);
  std::sort(code.atoms.begin(), code.atoms.end());
  code.coefficients.resize(code.atoms.size());
  std::vector<double> x(d, 0.0);
  for (std::size_t i = 0; i < code.atoms.size(); ++i) {
    code.coefficients[i] = coef(rng);
    if (std::find(boosted.begin(), boosted.end(), code.atoms[i]) != boosted.end()) {
      code.coefficients[i] *= boost;
    }
    const auto atom = dict.row(code.atoms[i]);
    for (std::size_t t = 0; t < d; ++t) x[t] += code.coefficients[i] * atom[t];
  }
  double norm = std::sqrt(dot(x, x));
  if (norm == 0.0) norm = 1.0;
  for (auto& v : x) v /= norm;
  for (auto& c : code.coefficients) c /= norm;
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : x) v += std::clamp(noise(rng), -3.0 * sigma, 3.0 * sigma);
  }
  return x;
}

std::string atom_text(const SparseCode& code) {
  std::string text;
  for (auto a : code.atoms) {
    if (!text.empty()) text += ' ';
    text += "atom" + std::to_string(a);
  }
  return text;
}

void check_common(std::uint32_t d, std::uint32_t n_true, std::uint32_t k_true, double sigma,
                  double zipf) {
  if (d == 0 || n_true == 0 || k_true == 0) {
    throw InvalidArgument("synthetic: d, n_true and k_true must be positive");
  }
  if (k_true > n_true) throw InvalidArgument("synthetic: k_true exceeds n_true");
  if (!(sigma >= 0.0)) throw InvalidArgument("synthetic: noise_sigma must be >= 0");
  if (!(zipf >= 0.0)) throw InvalidArgument("synthetic: zipf_exponent must be >= 0");
}

struct PendingDoc {
  SparseCode code;
  std::vector<double> values;
  int owner = -1;  // query index for relevant docs, -1 for distractors
};

// Shuffles documents, assigns ids in shuffled order and fills corpus, codes,
// texts and qrels.
void finalize_corpus(SyntheticBenchmark& bench, std::vector<PendingDoc> docs,
                     std::mt19937_64& rng) {
  std::shuffle(docs.begin(), docs.end(), rng);
  bench.corpus = EmbeddingStore(bench.config.d, EmbeddingKind::document);
  bench.corpus.reserve(docs.size());
  char buf[32];
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "d%06zu", i);
    bench.corpus.add(buf, std::span<const double>(docs[i].values));
    bench.doc_texts.push_back(atom_text(docs[i].code));
    if (docs[i].owner >= 0) {
      bench.qrels.add(bench.queries.id(static_cast<std::size_t>(docs[i].owner)), buf, 1);
    }
    bench.doc_codes.push_back(std::move(docs[i].code));
  }
}

std::string query_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "q%05zu", i);
  return buf;
}

}  // namespace

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    w[r] = std::pow(static_cast<double>(r + 1), -exponent);
    sum += w[r];
  }
  for (auto& v : w) v /= sum;
  return w;
}

double SyntheticBenchmark::noise_bound() const {
  return 3.0 * config.noise_sigma * std::sqrt(static_cast<double>(config.d));
}

SyntheticBenchmark generate_synthetic(const SynthConfig& cfg) {
  check_common(cfg.d, cfg.n_true, cfg.k_true, cfg.noise_sigma, cfg.zipf_exponent);
  if (cfg.n_queries == 0 && cfg.n_distractors == 0) {
    throw InvalidArgument("synthetic: nothing to generate");
  }

  std::mt19937_64 rng(cfg.seed);
  SyntheticBenchmark bench;
  bench.config = cfg;
  bench.dictionary = random_dictionary(cfg.n_true, cfg.d, rng);
  AtomSampler sampler(cfg.n_true, cfg.zipf_exponent, rng);
  bench.atom_rank = sampler.rank_of();

  bench.queries = EmbeddingStore(cfg.d, EmbeddingKind::query);
  std::vector<PendingDoc> docs;
  const std::uint32_t max_shared = std::max<std::uint32_t>(1, cfg.k_true - 1);
  for (std::uint32_t q = 0; q < cfg.n_queries; ++q) {
    SparseCode qcode;
    sampler.fill(qcode.atoms, cfg.k_true);
    auto qx = embed_code(bench.dictionary, qcode, cfg.noise_sigma, rng);
    bench.queries.add(query_id(q), std::span<const double>(qx));

    for (std::uint32_t j = 0; j < cfg.docs_per_query; ++j) {
      std::uniform_int_distribution<std::uint32_t> share_dist(1, max_shared);
      const auto share = share_dist(rng);
      auto pool = qcode.atoms;
      std::shuffle(pool.begin(), pool.end(), rng);
      PendingDoc doc;
      doc.owner = static_cast<int>(q);
      doc.code.atoms.assign(pool.begin(), pool.begin() + share);
      sampler.fill(doc.code.atoms, cfg.k_true);
      doc.values = embed_code(bench.dictionary, doc.code, cfg.noise_sigma, rng);
      docs.push_back(std::move(doc));
    }
    bench.query_codes.push_back(std::move(qcode));
  }
  for (std::uint32_t j = 0; j < cfg.n_distractors; ++j) {
    PendingDoc doc;
    sampler.fill(doc.code.atoms, cfg.k_true);
    doc.values = embed_code(bench.dictionary, doc.code, cfg.noise_sigma, rng);
    docs.push_back(std::move(doc));
  }
  finalize_corpus(bench, std::move(docs), rng);
  return bench;
}

SyntheticBenchmark generate_perspective_benchmark(const PerspectiveConfig& cfg) {
  check_common(cfg.d, cfg.n_true, cfg.k_true, cfg.noise_sigma, cfg.zipf_exponent);
  if (cfg.k_true < 2) throw InvalidArgument("perspective benchmark: need k_true >= 2");
  if (cfg.n_queries == 0 || cfg.docs_per_side == 0) {
    throw InvalidArgument("perspective benchmark: need queries and documents per side");
  }
  if (2ull * cfg.n_queries + cfg.k_true > cfg.n_true) {
    throw InvalidArgument("perspective benchmark: n_true too small for 2 reserved atoms per query");
  }
  if (!(cfg.perspective_boost >= 1.0)) {
    throw InvalidArgument("perspective benchmark: perspective_boost must be >= 1");
  }

  std::mt19937_64 rng(cfg.seed);
  SyntheticBenchmark bench;
  bench.config = SynthConfig{cfg.seed,          cfg.d,
                             cfg.n_true,        cfg.k_true,
                             cfg.n_queries,     2 * cfg.docs_per_side,
                             cfg.n_distractors, cfg.noise_sigma,
                             cfg.zipf_exponent};
  bench.dictionary = random_dictionary(cfg.n_true, cfg.d, rng);
  AtomSampler sampler(cfg.n_true, cfg.zipf_exponent, rng);
  bench.atom_rank = sampler.rank_of();
  bench.queries = EmbeddingStore(cfg.d, EmbeddingKind::query);

  // Perspective atoms are reserved: each belongs to one query and never
  // appears as filler, so "contains atom a" identifies one cluster.
  std::vector<std::uint32_t> pool(cfg.n_true);
  std::iota(pool.begin(), pool.end(), 0u);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<char> reserved(cfg.n_true, 0);
  for (std::uint32_t i = 0; i < 2 * cfg.n_queries; ++i) reserved[pool[i]] = 1;

  std::vector<PendingDoc> docs;
  for (std::uint32_t q = 0; q < cfg.n_queries; ++q) {
    const std::uint32_t a = pool[2 * q];
    const std::uint32_t b = pool[2 * q + 1];
    bench.perspectives.emplace_back(a, b);

    SparseCode qcode;
    qcode.atoms = {a, b};
    sampler.fill(qcode.atoms, cfg.k_true, &reserved);
    auto qx = embed_code(bench.dictionary, qcode, cfg.noise_sigma, rng, {a, b},
                         cfg.perspective_boost);
    bench.queries.add(query_id(q), std::span<const double>(qx));
    bench.query_codes.push_back(std::move(qcode));

    for (const auto keep : {a, b}) {
      for (std::uint32_t j = 0; j < cfg.docs_per_side; ++j) {
        PendingDoc doc;
        doc.owner = static_cast<int>(q);
        doc.code.atoms = {keep};
        sampler.fill(doc.code.atoms, cfg.k_true, &reserved);
        doc.values = embed_code(bench.dictionary, doc.code, cfg.noise_sigma, rng, {keep},
                                cfg.perspective_boost);
        docs.push_back(std::move(doc));
      }
    }
  }
  for (std::uint32_t j = 0; j < cfg.n_distractors; ++j) {
    PendingDoc doc;
    sampler.fill(doc.code.atoms, cfg.k_true, &reserved);
    doc.values = embed_code(bench.dictionary, doc.code, cfg.noise_sigma, rng);
    docs.push_back(std::move(doc));
  }
  finalize_corpus(bench, std::move(docs), rng);
  return bench;
}

namespace {

// Residual norm of x after least-squares projection onto the given atoms
// (normal equations solved by Gaussian elimination with partial pivoting).
double projection_residual(const Matrix& dict, const std::vector<std::uint32_t>& atoms,
                           std::span<const double> x) {
  const std::size_t k = atoms.size();
  std::vector<double> g(k * k), rhs(k);
  for (std::size_t i = 0; i < k; ++i) {
    rhs[i] = dot(dict.row(atoms[i]), x);
    for (std::size_t j = 0; j < k; ++j) g[i * k + j] = dot(dict.row(atoms[i]), dict.row(atoms[j]));
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r) {
      if (std::abs(g[r * k + c]) > std::abs(g[piv * k + c])) piv = r;
    }
    if (piv != c) {
      for (std::size_t j = 0; j < k; ++j) std::swap(g[c * k + j], g[piv * k + j]);
      std::swap(rhs[c], rhs[piv]);
    }
    const double p = g[c * k + c];
    if (p == 0.0) continue;
    for (std::size_t r = c + 1; r < k; ++r) {
      const double f = g[r * k + c] / p;
      for (std::size_t j = c; j < k; ++j) g[r * k + j] -= f * g[c * k + j];
      rhs[r] -= f * rhs[c];
    }
  }
  std::vector<double> coef(k, 0.0);
  for (std::size_t c = k; c-- > 0;) {
    double s = rhs[c];
    for (std::size_t j = c + 1; j < k; ++j) s -= g[c * k + j] * coef[j];
    coef[c] = g[c * k + c] != 0.0 ? s / g[c * k + c] : 0.0;
  }
  std::vector<double> r(x.begin(), x.end());
  for (std::size_t i = 0; i < k; ++i) {
    const auto atom = dict.row(atoms[i]);
    for (std::size_t t = 0; t < r.size(); ++t) r[t] -= coef[i] * atom[t];
  }
  return std::sqrt(dot(r, r));
}

}  // namespace

double max_planted_residual(const SyntheticBenchmark& bench) {
  double worst = 0.0;
  for (std::size_t i = 0; i < bench.queries.size(); ++i) {
    worst = std::max(worst, projection_residual(bench.dictionary, bench.query_codes[i].atoms,
                                                bench.queries.row(i)));
  }
  for (std::size_t i = 0; i < bench.corpus.size(); ++i) {
    worst = std::max(worst, projection_residual(bench.dictionary, bench.doc_codes[i].atoms,
                                                bench.corpus.row(i)));
  }
  return worst;
}

bool verify_synthetic(const SyntheticBenchmark& bench) {
  for (const auto* codes : {&bench.query_codes, &bench.doc_codes}) {
    for (const auto& c : *codes) {
      if (c.atoms.size() != bench.config.k_true) return false;
      if (!std::is_sorted(c.atoms.begin(), c.atoms.end())) return false;
      if (std::adjacent_find(c.atoms.begin(), c.atoms.end()) != c.atoms.end()) return false;
      for (double v : c.coefficients) {
        if (!(v > 0.0)) return false;
      }
    }
  }
  return max_planted_residual(bench) <= bench.noise_bound() + 1e-9;
}

SaeParams dictionary_params(const SyntheticBenchmark& bench, std::size_t k) {
  SaeParams p(bench.config.d, bench.config.n_true, k);
  p.decoder = bench.dictionary;
  p.encoder = bench.dictionary;
  return p;
}

SparseLatent planted_latent(const SparseCode& code, std::size_t n_true) {
  std::vector<SparseEntry> entries;
  for (std::size_t i = 0; i < code.atoms.size(); ++i) {
    entries.push_back({code.atoms[i], code.coefficients[i]});
  }
  return SparseLatent(n_true, std::move(entries));
}

}  // namespace embscope
