#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lewisgame/error.hpp"
#include "lewisgame/rng.hpp"

namespace lewisgame {

namespace detail {

inline void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) {
      fail(ErrorKind::Parameter, std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace detail

// Dense vector of 64-bit reals. Construction rejects NaN/Inf.
class Vec64 {
 public:
  Vec64() = default;

  explicit Vec64(std::vector<double> values) : v_(std::move(values)) {
    detail::require_finite(v_, "Vec64");
  }

  Vec64(std::initializer_list<double> values) : v_(values) {
    detail::require_finite(v_, "Vec64");
  }

  static Vec64 zeros(std::size_t n) {
    Vec64 out;
    out.v_.assign(n, 0.0);
    return out;
  }

  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double operator[](std::size_t i) const { return v_[i]; }
  double& operator[](std::size_t i) { return v_[i]; }

  const std::vector<double>& values() const { return v_; }

  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  friend bool operator==(const Vec64& a, const Vec64& b) { return a.v_ == b.v_; }

 private:
  std::vector<double> v_;
};

// Row-major dense matrix of 64-bit reals. Construction rejects NaN/Inf and
// shape/payload mismatches.
class Mat64 {
 public:
  Mat64() = default;

  Mat64(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), v_(rows * cols, 0.0) {}

  Mat64(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), v_(std::move(values)) {
    if (v_.size() != rows_ * cols_) {
      fail(ErrorKind::Dimension, "Mat64: element count does not match shape");
    }
    detail::require_finite(v_, "Mat64");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }

  Vec64 row(std::size_t r) const {
    if (r >= rows_) fail(ErrorKind::Parameter, "Mat64::row: index out of range");
    return Vec64(std::vector<double>(v_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
                                     v_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_)));
  }

  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  friend bool operator==(const Mat64& a, const Mat64& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

inline double dot(const Vec64& a, const Vec64& b) {
  if (a.size() != b.size()) fail(ErrorKind::Dimension, "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(const Vec64& v) { return std::sqrt(dot(v, v)); }

inline Vec64 matvec(const Mat64& m, const Vec64& x) {
  if (m.cols() != x.size()) fail(ErrorKind::Dimension, "matvec: shape mismatch");
  Vec64 out = Vec64::zeros(m.rows());
  const std::vector<double>& mv = m.values();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    const double* row = mv.data() + r * m.cols();
    for (std::size_t c = 0; c < m.cols(); ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  return out;
}

// softmax(logits / temperature) with max-subtraction; logits are unbounded
// during training so the naive exp would overflow.
inline Vec64 softmax(const Vec64& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorKind::Parameter, "softmax: temperature must be positive");
  }
  if (logits.empty()) fail(ErrorKind::Parameter, "softmax: empty logits");
  const std::size_t n = logits.size();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = logits[i] / temperature;
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = std::exp(z[i] - m);
    sum += z[i];
  }
  for (std::size_t i = 0; i < n; ++i) z[i] /= sum;
  return Vec64(std::move(z));
}

// log softmax(logits / temperature); stable even where a probability
// underflows to zero.
inline Vec64 log_softmax(const Vec64& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorKind::Parameter, "log_softmax: temperature must be positive");
  }
  if (logits.empty()) fail(ErrorKind::Parameter, "log_softmax: empty logits");
  const std::size_t n = logits.size();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = logits[i] / temperature;
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(z[i] - m);
  const double lse = m + std::log(sum);
  for (std::size_t i = 0; i < n; ++i) z[i] -= lse;
  return Vec64(std::move(z));
}

inline Vec64 sigmoid(const Vec64& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Split on sign so exp never overflows.
    const double v = x[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  return Vec64(std::move(out));
}

// Draws index i with probability probs[i]. probs must be nonnegative and
// sum to 1 within 1e-9.
inline std::size_t sample_categorical(const Vec64& probs, RngStream& rng) {
  if (probs.empty()) fail(ErrorKind::Distribution, "sample_categorical: empty distribution");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0) {
      fail(ErrorKind::Distribution, "sample_categorical: negative probability at index " +
                                        std::to_string(i));
    }
    sum += probs[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(ErrorKind::Distribution, "sample_categorical: probabilities sum to " +
                                      std::to_string(sum));
  }
  const double u = rng.next_double() * sum;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cum += probs[i];
    if (u < cum) return probs[i] > 0.0 ? i : last_positive;
  }
  return last_positive;  // rounding pushed u past the final cumulative sum
}

inline double cosine(const Vec64& a, const Vec64& b) {
  if (a.size() != b.size()) fail(ErrorKind::Dimension, "cosine: length mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::Degenerate, "cosine: zero-norm input");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline Vec64 l2_normalize(const Vec64& v) {
  const double n = norm(v);
  if (n == 0.0) fail(ErrorKind::Degenerate, "l2_normalize: zero vector");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return Vec64(std::move(out));
}

// Fractional ranks, 1-based; tied values share the average of their ranks.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::Dimension, "pearson: length mismatch");
  if (x.size() < 2) fail(ErrorKind::Parameter, "pearson: need at least 2 points");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    fail(ErrorKind::Degenerate, "pearson: undefined correlation for constant sequence");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::Dimension, "spearman: length mismatch");
  if (x.size() < 2) fail(ErrorKind::Parameter, "spearman: need at least 2 points");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace lewisgame
