// SPDX-License-Identifier: Apache-2.0
#include "embscope/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>

#include "embscope/error.hpp"

namespace embscope {

namespace {
void require_finite(std::span<const double> values) {
  if (!all_finite(values)) throw InvalidArgument("vector contains NaN or Inf");
}
}  // namespace

DenseVector::DenseVector(std::size_t dim, double fill) : values_(dim, fill) {
  require_finite(values_);
}

DenseVector::DenseVector(std::vector<double> values) : values_(std::move(values)) {
  require_finite(values_);
}

DenseVector::DenseVector(std::initializer_list<double> values) : values_(values) {
  require_finite(values_);
}

DenseVector DenseVector::from_span(std::span<const double> values) {
  return DenseVector(std::vector<double>(values.begin(), values.end()));
}

DenseVector DenseVector::from_floats(std::span<const float> values) {
  return DenseVector(std::vector<double>(values.begin(), values.end()));
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

std::vector<IndexValue> topk_select(std::span<const double> values, std::size_t k) {
  if (values.empty()) throw InvalidArgument("topk_select: empty input");
  if (k == 0) throw InvalidArgument("topk_select: k must be positive");
  const std::size_t take = std::min(k, values.size());

  std::vector<std::uint32_t> order(values.size());
  std::iota(order.begin(), order.end(), 0u);
  // Strict total order: larger value first, then lower index.
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
  if (take < order.size()) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take - 1),
                     order.end(), before);
  }
  order.resize(take);
  std::sort(order.begin(), order.end());

  std::vector<IndexValue> out;
  out.reserve(take);
  for (auto i : order) out.push_back({i, values[i]});
  return out;
}

void matvec(const Matrix& m, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
}

AdamState AdamState::for_size(std::size_t n) {
  AdamState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw InvalidArgument("adam_step: shape mismatch between params, grads and state");
  }
  if (!(lr > 0.0)) throw InvalidArgument("adam_step: lr must be positive");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  auto& m = state.first_moment;
  auto& v = state.second_moment;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double cosine_lr(const CosineSchedule& schedule, std::uint64_t step) {
  if (schedule.total_steps == 0) throw InvalidArgument("cosine_lr: total_steps must be positive");
  if (step > schedule.total_steps) {
    throw InvalidArgument("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(schedule.total_steps) + "]");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  const double lr = schedule.min_lr + 0.5 * (schedule.initial_lr - schedule.min_lr) *
                                          (1.0 + std::cos(std::numbers::pi * frac));
  // cos(pi) is not exactly -1 in floating point.
  return std::clamp(lr, std::min(schedule.min_lr, schedule.initial_lr),
                    std::max(schedule.min_lr, schedule.initial_lr));
}

std::size_t worker_count(std::size_t count, std::size_t threads) {
  if (count == 0) return 1;
  return std::max<std::size_t>(1, std::min(threads, count));
}

void parallel_chunks(std::size_t count, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t workers = worker_count(count, threads);
  if (workers == 1) {
    fn(0, count, 0);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(count, w * chunk);
      const std::size_t end = std::min(count, begin + chunk);
      pool.emplace_back([&, begin, end, w] {
        try {
          fn(begin, end, w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace embscope
