#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dsfm/core.hpp"

namespace dsfm {

/// Dense row-major matrix of doubles. Vectors are 1×n matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix row_vector(std::vector<double> v) {
    Matrix m;
    m.rows = 1;
    m.cols = v.size();
    m.data = std::move(v);
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  /// Same storage, reinterpreted with a new shape.
  Matrix reshaped(std::size_t r, std::size_t c) const {
    if (r * c != data.size()) throw ShapeError("reshape: element count mismatch");
    Matrix m = *this;
    m.rows = r;
    m.cols = c;
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline void require_shape(const Matrix& m, std::size_t r, std::size_t c, const char* what) {
  if (m.rows != r || m.cols != c)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                     std::to_string(m.rows) + "x" + std::to_string(m.cols));
}

/// A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* o = out.row(i);
    const double* ar = a.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = ar[k];
      if (av == 0.0) continue;
      const double* br = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

/// acc += A^T * B
inline void add_matmul_tn(Matrix& acc, const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || acc.rows != a.cols || acc.cols != b.cols) throw ShapeError("matmul_tn: shape mismatch");
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* ar = a.row(r);
    const double* br = b.row(r);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* o = acc.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += av * br[j];
    }
  }
}

/// A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

inline void add_inplace(Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("add: shape mismatch");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

/// Adds a 1×cols row vector to every row.
inline void add_row_broadcast(Matrix& a, const Matrix& bias) {
  if (bias.rows != 1 || bias.cols != a.cols) throw ShapeError("bias broadcast: shape mismatch");
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) a(r, c) += bias.data[c];
}

/// acc(0, c) += sum_r m(r, c)
inline void add_column_sums(Matrix& acc, const Matrix& m) {
  if (acc.rows != 1 || acc.cols != m.cols) throw ShapeError("column sums: shape mismatch");
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) acc.data[c] += m(r, c);
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, std::size_t r, std::size_t c) : name(std::move(n)), value(r, c), grad(r, c) {}
  void zero_grad() { grad.fill(0.0); }
};

}  // namespace dsfm
