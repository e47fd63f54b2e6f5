// SPDX-License-Identifier: Apache-2.0
//
// Numeric kernels shared by the whole toolkit: dense vectors and matrices,
// deterministic TopK selection, Adam, and the cosine learning-rate schedule.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace embscope {

/// Finite 64-bit vector. Construction from raw values rejects NaN/Inf.
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t dim, double fill = 0.0);
  explicit DenseVector(std::vector<double> values);
  DenseVector(std::initializer_list<double> values);
  static DenseVector from_span(std::span<const double> values);
  static DenseVector from_floats(std::span<const float> values);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }
  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  operator std::span<const double>() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const DenseVector&) const = default;

 private:
  std::vector<double> values_;
};

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct IndexValue {
  std::uint32_t index;
  double value;
  bool operator==(const IndexValue&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> values);

/// Largest min(k, size) entries, returned in ascending index order. Ties on
/// value go to the lower index. Throws InvalidArgument on empty input or k == 0.
std::vector<IndexValue> topk_select(std::span<const double> values, std::size_t k);

/// y = M x (M is rows x cols, x has cols entries).
void matvec(const Matrix& m, std::span<const double> x, std::span<double> y);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(std::size_t n);
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update applied in place to `params`.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr);

struct CosineSchedule {
  double initial_lr = 1e-3;
  double min_lr = 0.0;
  std::uint64_t total_steps = 1;
};

/// min_lr + (initial_lr - min_lr) * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(const CosineSchedule& schedule, std::uint64_t step);

/// SplitMix64 finalizer; used to derive independent seeds and hash bits.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Runs fn(begin, end, worker) over [0, count) split into contiguous chunks,
/// one per worker. With threads <= 1 everything runs on the calling thread.
void parallel_chunks(std::size_t count, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Number of workers parallel_chunks will use for `count` items.
std::size_t worker_count(std::size_t count, std::size_t threads);

}  // namespace embscope
