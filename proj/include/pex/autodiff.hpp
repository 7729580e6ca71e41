// SPDX-License-Identifier: Apache-2.0
//
// A small reverse-mode tape over dense matrices. Every model pass records
// its operations on a Tape; Tape::backward walks the records in reverse
// and accumulates gradients, writing parameter gradients straight into
// Parameter::grad.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pex/kernels.hpp"

namespace pex::nn {

struct Parameter {
  std::string name;
  Matrix value;
  /// Accumulator written by Tape::backward; not part of the logical value.
  mutable Matrix grad;

  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
};

/// Owns a component's parameters in registration order. Names are unique.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Matrix value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  double grad_norm() const;
  /// Deep copy of parameter values; gradients start at zero.
  ParameterSet clone() const;
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  /// `training` switches dropout on; `rng` drives its masks. With
  /// `record_grad` off, parameters enter as plain views and nothing is kept
  /// for a backward pass (inference).
  explicit Tape(bool training = false, std::mt19937_64* rng = nullptr, bool record_grad = true)
      : training_(training), record_grad_(record_grad), rng_(rng) {}

  static Tape inference() { return Tape(false, nullptr, false); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return training_; }
  std::mt19937_64& rng();

  Var constant(Matrix value);
  /// Reads the parameter in place; gradients land in p.grad on backward.
  Var param(const Parameter& p);
  Var record(Matrix value, std::vector<int> inputs, Backward backward);

  const Matrix& value(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of a node, allocated (zeroed) on first access.
  Matrix& grad(int id);
  bool has_grad(int id) const;

  /// Seeds d(root)/d(root) = scale and propagates. Root must be 1x1.
  void backward(Var root, double scale = 1.0);
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own_value;
    const Matrix* external_value = nullptr;
    Matrix own_grad;
    Matrix* external_grad = nullptr;
    Backward backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool training_;
  bool record_grad_;
  std::mt19937_64* rng_;
};

// Differentiable operations. All inputs must live on the same tape.
Var matmul(Var a, Var b);      // a * b
Var matmul_nt(Var a, Var b);   // a * b^T
Var add(Var a, Var b);
Var add_row(Var a, Var bias);  // bias (1 x n) broadcast over rows
Var add_constant(Var a, const Matrix& c);
Var scale(Var a, double s);
Var tanh(Var a);
Var gelu(Var a);
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
/// Row softmax; mask is empty or one byte per element.
Var softmax_rows(Var a, std::vector<unsigned char> mask = {});
Var dropout(Var a, double rate);
/// Gathers rows of `table` (V x d) for each id.
Var embedding(Var table, std::span<const int> ids);
Var slice_cols(Var a, std::size_t start, std::size_t width);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var select_row(Var a, std::size_t r);
/// Per-column max over rows whose mask byte is set (empty mask: all rows).
/// Gradient routes to the earliest maximal row in each column.
Var masked_max_rows(Var a, std::span<const unsigned char> row_mask = {});
/// Sum of weight_i * scalar_i over 1x1 inputs; zero weights are skipped.
Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

}  // namespace pex::nn
