#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logitbench/errors.hpp"

namespace logitbench {

// Dense row-major matrix of doubles. The only numeric carrier in the
// library: batches are rows, weights are dim_in x dim_out, biases 1 x dim_out.
class Matrix2D {
 public:
  Matrix2D() = default;

  Matrix2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix2D(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix2D: data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  // Nested-list construction, mainly for tests: {{1, 2}, {3, 4}}.
  Matrix2D(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw ShapeError("Matrix2D: ragged initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix2D identity(std::size_t n) {
    Matrix2D m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix2D row_vector(std::span<const double> values) {
    return Matrix2D(1, values.size(), std::vector<double>(values.begin(), values.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Matrix2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  // Copies the listed rows, in order, into a new matrix.
  Matrix2D gather_rows(std::span<const std::size_t> indices) const {
    Matrix2D out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto src = row(indices[i]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

  friend bool operator==(const Matrix2D&, const Matrix2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Matrix2D& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_finite(const Matrix2D& m, const char* where) {
  if (!m.all_finite()) throw NumericError(std::string(where) + ": non-finite value");
}

inline Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a) + " x " + shape_string(b));
  }
  Matrix2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double a_ip = a(i, p);
      if (a_ip == 0.0) continue;
      const auto b_row = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += a_ip * b_row[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

// a^T * b without materializing the transpose.
inline Matrix2D matmul_at_b(const Matrix2D& a, const Matrix2D& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at_b: " + shape_string(a) + "^T x " + shape_string(b));
  }
  Matrix2D out(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const auto a_row = a.row(p);
    const auto b_row = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double a_pi = a_row[i];
      if (a_pi == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += a_pi * b_row[j];
    }
  }
  return out;
}

// a * b^T without materializing the transpose.
inline Matrix2D matmul_a_bt(const Matrix2D& a, const Matrix2D& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_a_bt: " + shape_string(a) + " x " + shape_string(b) + "^T");
  }
  Matrix2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a_row[p] * b_row[p];
      out(i, j) = acc;
    }
  }
  return out;
}

inline Matrix2D transpose(const Matrix2D& m) {
  Matrix2D out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

inline Matrix2D scaled(const Matrix2D& m, double s) {
  Matrix2D out = m;
  for (double& v : out.data()) v *= s;
  return out;
}

inline Matrix2D add(const Matrix2D& a, const Matrix2D& b) {
  if (!a.same_shape(b)) throw ShapeError("add: " + shape_string(a) + " + " + shape_string(b));
  Matrix2D out = a;
  auto dst = out.data();
  const auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

// Adds a 1 x cols bias to every row.
inline Matrix2D add_row_bias(const Matrix2D& a, const Matrix2D& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row_bias: " + shape_string(a) + " + " + shape_string(bias));
  }
  Matrix2D out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
  return out;
}

inline void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : row) v /= total;
}

// Per-row softmax with max subtraction; rows sum to one.
inline Matrix2D rowwise_softmax(const Matrix2D& z) {
  Matrix2D out = z;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

// log-sum-exp of a row, stable for large entries.
inline double logsumexp(std::span<const double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double v : row) total += std::exp(v - mx);
  return mx + std::log(total);
}

inline double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline std::vector<double> row_l2_norm(const Matrix2D& z) {
  std::vector<double> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) out[i] = l2_norm(z.row(i));
  return out;
}

// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace logitbench
