// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrix and the numeric kernels every model pass goes
// through. Each kernel has an OpenMP implementation (the default entry
// points) and a plain serial version under `reference::` that the tests
// use as the ground truth.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pex/errors.hpp"

namespace pex {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace kernels {

// out (+)= a * b
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a * b^T
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a^T * b
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

/// In-place row softmax. `mask` is either empty (all visible) or holds one
/// byte per element, row-major; masked-out entries get probability 0. A row
/// with no visible column is left all-zero.
void softmax_rows(Matrix& m, std::span<const unsigned char> mask = {});

/// y += alpha * x
void axpy(double alpha, const Matrix& x, Matrix& y);

/// Runs body(i) for i in [0, n). Iterations must be independent.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
#pragma omp parallel for schedule(dynamic, 1) if (n > 1)
  for (std::size_t i = 0; i < n; ++i) body(i);
}

namespace reference {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void softmax_rows(Matrix& m, std::span<const unsigned char> mask = {});
}  // namespace reference

}  // namespace kernels
}  // namespace pex
