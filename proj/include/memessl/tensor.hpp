#pragma once

// Dense row-major double matrices and the handful of products the model
// needs, expressed over the dispatched vector kernels.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "memessl/kernels.hpp"

namespace memessl {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  std::size_t size() const { return data.size(); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Matrix&) const = default;
};

// y[i,:] = b + x[i,:] * w     (x: n x in, w: in x out, b: 1 x out or null)
inline Matrix linear(const Matrix& x, const Matrix& w, const Matrix* b) {
  Matrix y(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i) {
    auto yr = y.row(i);
    if (b != nullptr) std::copy(b->data.begin(), b->data.end(), yr.begin());
    for (int p = 0; p < x.cols; ++p) kernels::axpy(x(i, p), w.row(p), yr);
  }
  return y;
}
inline Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) { return linear(x, w, &b); }

// Accumulates the gradients of linear(): dx += dy w^T, dw += x^T dy, db += sum_i dy.
inline void linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix* dx, Matrix& dw, Matrix* db) {
  for (int i = 0; i < x.rows; ++i) {
    auto dyr = dy.row(i);
    if (db != nullptr) kernels::axpy(1.0, dyr, db->row(0));
    for (int p = 0; p < x.cols; ++p) {
      kernels::axpy(x(i, p), dyr, dw.row(p));
      if (dx != nullptr) (*dx)(i, p) += kernels::dot(dyr, w.row(p));
    }
  }
}
inline void linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix* dx, Matrix& dw, Matrix& db) {
  linear_backward(x, w, dy, dx, dw, &db);
}

}  // namespace memessl
