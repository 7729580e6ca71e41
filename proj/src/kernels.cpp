// SPDX-License-Identifier: Apache-2.0

#include "pex/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <omp.h>

#include <Eigen/Core>

namespace pex {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for Matrix");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void prepare(Matrix& out, std::size_t rows, std::size_t cols, bool accumulate, const char* what) {
  if (accumulate) {
    if (out.rows() != rows || out.cols() != cols)
      throw ShapeError(std::string(what) + ": accumulator is " + out.shape_str() + ", expected " +
                       std::to_string(rows) + "x" + std::to_string(cols));
  } else if (out.rows() != rows || out.cols() != cols) {
    out = Matrix(rows, cols);
  } else {
    out.fill(0.0);
  }
}

void check_inner(std::size_t lhs, std::size_t rhs, const Matrix& a, const Matrix& b,
                 const char* what) {
  if (lhs != rhs)
    throw ShapeError(std::string(what) + ": " + a.shape_str() + " vs " + b.shape_str());
}

void softmax_row(double* row, const unsigned char* mask, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (!mask || mask[j]) mx = std::max(mx, row[j]);
  if (mx == -std::numeric_limits<double>::infinity()) {
    std::fill(row, row + n, 0.0);
    return;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask || mask[j]) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    } else {
      row[j] = 0.0;
    }
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

/// Splits [0, rows) into one contiguous panel per thread when the work is
/// large enough; each panel is an independent block product.
template <typename Body>
void for_row_panels(std::size_t rows, std::size_t work, Body&& body) {
  const int threads = work > kParallelWork ? omp_get_max_threads() : 1;
  if (threads <= 1 || rows < 2) {
    if (rows > 0) body(0, rows);
    return;
  }
#pragma omp parallel num_threads(threads)
  {
    const std::size_t t = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t r0 = rows * t / nt, r1 = rows * (t + 1) / nt;
    if (r1 > r0) body(r0, r1 - r0);
  }
}

}  // namespace

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check_inner(a.cols(), b.rows(), a, b, "gemm_nn");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  prepare(out, m, n, accumulate, "gemm_nn");
  const ConstMap A(a.data(), m, k), B(b.data(), k, n);
  MutMap C(out.data(), m, n);
  for_row_panels(m, m * n * k, [&](std::size_t r0, std::size_t len) {
    C.middleRows(r0, len).noalias() += A.middleRows(r0, len) * B;
  });
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check_inner(a.cols(), b.cols(), a, b, "gemm_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  prepare(out, m, n, accumulate, "gemm_nt");
  const ConstMap A(a.data(), m, k), B(b.data(), n, k);
  MutMap C(out.data(), m, n);
  for_row_panels(m, m * n * k, [&](std::size_t r0, std::size_t len) {
    C.middleRows(r0, len).noalias() += A.middleRows(r0, len) * B.transpose();
  });
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check_inner(a.rows(), b.rows(), a, b, "gemm_tn");
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  prepare(out, m, n, accumulate, "gemm_tn");
  const ConstMap A(a.data(), k, m), B(b.data(), k, n);
  MutMap C(out.data(), m, n);
  for_row_panels(m, m * n * k, [&](std::size_t r0, std::size_t len) {
    C.middleRows(r0, len).noalias() += A.middleCols(r0, len).transpose() * B;
  });
}

void softmax_rows(Matrix& m, std::span<const unsigned char> mask) {
  if (!mask.empty() && mask.size() != m.size())
    throw ShapeError("softmax_rows: mask size " + std::to_string(mask.size()) + " for " +
                     m.shape_str());
  const std::size_t rows = m.rows(), cols = m.cols();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r)
    softmax_row(m.data() + r * cols, mask.empty() ? nullptr : mask.data() + r * cols, cols);
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  if (!x.same_shape(y)) throw ShapeError("axpy: " + x.shape_str() + " vs " + y.shape_str());
  const double* xs = x.data();
  double* ys = y.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
}

namespace reference {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check_inner(a.cols(), b.rows(), a, b, "gemm_nn");
  prepare(out, a.rows(), b.cols(), accumulate, "gemm_nn");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) += acc;
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check_inner(a.cols(), b.cols(), a, b, "gemm_nt");
  prepare(out, a.rows(), b.rows(), accumulate, "gemm_nt");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(j, p);
      out(i, j) += acc;
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check_inner(a.rows(), b.rows(), a, b, "gemm_tn");
  prepare(out, a.cols(), b.cols(), accumulate, "gemm_tn");
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) acc += a(p, i) * b(p, j);
      out(i, j) += acc;
    }
}

void softmax_rows(Matrix& m, std::span<const unsigned char> mask) {
  if (!mask.empty() && mask.size() != m.size())
    throw ShapeError("softmax_rows: mask size mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r)
    softmax_row(m.data() + r * m.cols(), mask.empty() ? nullptr : mask.data() + r * m.cols(),
                m.cols());
}

}  // namespace reference
}  // namespace kernels
}  // namespace pex
