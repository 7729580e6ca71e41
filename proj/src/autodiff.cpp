// SPDX-License-Identifier: Apache-2.0

#include "pex/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pex/random.hpp"

namespace pex::nn {

// ---------------------------------------------------------------- ParameterSet

Parameter& ParameterSet::add(const std::string& name, Matrix value) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return *params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return *params_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

double ParameterSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_)
    for (double g : p->grad.storage()) sq += g * g;
  return std::sqrt(sq);
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& p : params_) out.add(p->name, p->value);
  return out;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& p : params_) {
    const Parameter& src = other.at(p->name);
    if (!src.value.same_shape(p->value))
      throw ShapeError("parameter " + p->name + ": " + src.value.shape_str() + " vs " +
                       p->value.shape_str());
    p->value = src.value;
  }
}

// ------------------------------------------------------------------------ Tape

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on " + v.shape_str());
  return v.data()[0];
}

std::mt19937_64& Tape::rng() {
  if (!rng_) throw Error("tape has no random generator attached");
  return *rng_;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.own_value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.external_value = &p.value;
  if (record_grad_) {
    n.external_grad = &p.grad;
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, std::vector<int> inputs, Backward backward) {
  Node n;
  n.own_value = std::move(value);
  for (int i : inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.external_value ? *n.external_value : n.own_value;
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.external_grad) return *n.external_grad;
  if (n.own_grad.empty()) {
    const Matrix& v = value(id);
    n.own_grad = Matrix(v.rows(), v.cols());
  }
  return n.own_grad;
}

bool Tape::has_grad(int id) const {
  const Node& n = nodes_[id];
  return n.external_grad != nullptr || !n.own_grad.empty();
}

void Tape::backward(Var root, double scale) {
  if (root.tape != this) throw Error("backward: variable from another tape");
  if (value(root.id).size() != 1) throw ShapeError("backward root must be 1x1");
  if (!nodes_[root.id].needs_grad) return;
  grad(root.id).data()[0] += scale;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || !has_grad(i)) continue;
    n.backward(*this, i);
  }
}

// ------------------------------------------------------------------ operations

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw Error("variables live on different tapes");
  return *a.tape;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  Matrix out;
  kernels::gemm_nn(a.value(), b.value(), out);
  const int ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) kernels::gemm_nt(g, t.value(ib), t.grad(ia), true);
    if (t.needs_grad(ib)) kernels::gemm_tn(t.value(ia), g, t.grad(ib), true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  Matrix out;
  kernels::gemm_nt(a.value(), b.value(), out);
  const int ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) kernels::gemm_nn(g, t.value(ib), t.grad(ia), true);
    if (t.needs_grad(ib)) kernels::gemm_tn(g, t.value(ia), t.grad(ib), true);
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  kernels::axpy(1.0, b.value(), out);
  const int ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) kernels::axpy(1.0, g, t.grad(ia));
    if (t.needs_grad(ib)) kernels::axpy(1.0, g, t.grad(ib));
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = same_tape(a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw ShapeError("add_row: " + av.shape_str() + " + " + bv.shape_str());
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv.data()[c];
  }
  const int ia = a.id, ib = bias.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) kernels::axpy(1.0, g, t.grad(ia));
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad(ib);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb.data()[c] += row[c];
      }
    }
  });
}

Var add_constant(Var a, const Matrix& c) {
  require_same_shape(a.value(), c, "add_constant");
  Matrix out = a.value();
  kernels::axpy(1.0, c, out);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    kernels::axpy(1.0, t.grad(self), t.grad(ia));
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.storage()) v *= s;
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, s](Tape& t, int self) {
    kernels::axpy(s, t.grad(self), t.grad(ia));
  });
}

Var tanh(Var a) {
  Matrix out = a.value();
  for (double& v : out.storage()) v = std::tanh(v);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  Matrix out = a.value();
  for (double& x : out.storage()) x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.data()[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + th) +
                       0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      ga.data()[i] += g.data()[i] * d;
    }
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  Tape& t = same_tape(a, gain);
  const Matrix& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.value().size() != cols || bias.value().size() != cols)
    throw ShapeError("layer_norm: gain/bias width mismatch for " + x.shape_str());
  auto xhat = std::make_shared<Matrix>(rows, cols);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Matrix out(rows, cols);
  const double* gv = gain.value().data();
  const double* bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (in[c] - mean) * is;
      (*xhat)(r, c) = h;
      out(r, c) = h * gv[c] + bv[c];
    }
  }
  const int ia = a.id, ig = gain.id, ib = bias.id;
  return t.record(std::move(out), {ia, ig, ib}, [ia, ig, ib, xhat, inv_std](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const std::size_t rows = g.rows(), cols = g.cols();
    if (t.needs_grad(ig)) {
      Matrix& gg = t.grad(ig);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gg.data()[c] += g(r, c) * (*xhat)(r, c);
    }
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb.data()[c] += g(r, c);
    }
    if (t.needs_grad(ia)) {
      const double* gv = t.value(ig).data();
      Matrix& ga = t.grad(ia);
      std::vector<double> dh(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          dh[c] = g(r, c) * gv[c];
          mean_dh += dh[c];
          mean_dh_h += dh[c] * (*xhat)(r, c);
        }
        mean_dh /= static_cast<double>(cols);
        mean_dh_h /= static_cast<double>(cols);
        const double is = (*inv_std)[r];
        for (std::size_t c = 0; c < cols; ++c)
          ga(r, c) += is * (dh[c] - mean_dh - (*xhat)(r, c) * mean_dh_h);
      }
    }
  });
}

Var softmax_rows(Var a, std::vector<unsigned char> mask) {
  Matrix out = a.value();
  kernels::softmax_rows(out, mask);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      auto yr = y.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < gr.size(); ++c) dot += gr[c] * yr[c];
      auto out = ga.row(r);
      for (std::size_t c = 0; c < gr.size(); ++c) out[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var dropout(Var a, double rate) {
  Tape& t = *a.tape;
  if (!(rate < 1.0)) throw ParameterError("dropout rate must be < 1");
  if (!t.training() || rate <= 0.0) return a;
  const Matrix& x = a.value();
  auto keep = std::make_shared<std::vector<double>>(x.size());
  const double inv = 1.0 / (1.0 - rate);
  Matrix out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*keep)[i] = uniform01(t.rng()) < rate ? 0.0 : inv;
    out.data()[i] *= (*keep)[i];
  }
  const int ia = a.id;
  return t.record(std::move(out), {ia}, [ia, keep](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * (*keep)[i];
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows())
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(tv.rows()) + " rows");
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const int it = table.id;
  std::vector<int> rows(ids.begin(), ids.end());
  return table.tape->record(std::move(out), {it}, [it, rows](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad(it);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto dst = gt.row(static_cast<std::size_t>(rows[i]));
      auto src = g.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t width) {
  const Matrix& x = a.value();
  if (start + width > x.cols()) throw ShapeError("slice_cols out of range on " + x.shape_str());
  Matrix out(x.rows(), width);
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy_n(x.row(r).begin() + start, width, out.row(r).begin());
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, start, width](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < width; ++c) ga(r, start + c) += g(r, c);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape != &t) throw Error("concat_cols across tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    offsets.push_back(cols);
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offsets[k]);
  }
  return t.record(std::move(out), ids, [ids, offsets](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Matrix& gp = t.grad(ids[k]);
      for (std::size_t r = 0; r < gp.rows(); ++r)
        for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, offsets[k] + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Tape& t = *parts.front().tape;
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape != &t) throw Error("concat_rows across tapes");
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    offsets.push_back(rows);
    rows += p.rows();
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    std::copy(v.storage().begin(), v.storage().end(), out.data() + offsets[k] * cols);
  }
  return t.record(std::move(out), ids, [ids, offsets](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Matrix& gp = t.grad(ids[k]);
      const double* src = g.data() + offsets[k] * g.cols();
      for (std::size_t i = 0; i < gp.size(); ++i) gp.data()[i] += src[i];
    }
  });
}

Var select_row(Var a, std::size_t r) {
  const Matrix& x = a.value();
  if (r >= x.rows()) throw ShapeError("select_row out of range on " + x.shape_str());
  Matrix out = Matrix::row_vector(x.row(r));
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, r](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    auto dst = t.grad(ia).row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g.data()[c];
  });
}

Var masked_max_rows(Var a, std::span<const unsigned char> row_mask) {
  const Matrix& x = a.value();
  if (!row_mask.empty() && row_mask.size() != x.rows())
    throw ShapeError("masked_max_rows: mask length " + std::to_string(row_mask.size()) + " for " +
                     x.shape_str());
  auto argmax = std::make_shared<std::vector<std::size_t>>(x.cols(), x.rows());
  Matrix out(1, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!row_mask.empty() && !row_mask[r]) continue;
      // Strict comparison keeps the earliest row on ties.
      if ((*argmax)[c] == x.rows() || x(r, c) > out(0, c)) {
        (*argmax)[c] = r;
        out(0, c) = x(r, c);
      }
    }
    if ((*argmax)[c] == x.rows()) throw PoolingError("max-pool over a fully masked sequence");
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, argmax](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t c = 0; c < g.cols(); ++c) ga((*argmax)[c], c) += g(0, c);
  });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size() || scalars.empty())
    throw ShapeError("weighted_sum: " + std::to_string(scalars.size()) + " terms, " +
                     std::to_string(weights.size()) + " weights");
  Tape& t = *scalars.front().tape;
  double total = 0.0;
  std::vector<int> ids;
  std::vector<double> ws;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (weights[i] == 0.0) continue;
    total += weights[i] * scalars[i].scalar();
    ids.push_back(scalars[i].id);
    ws.push_back(weights[i]);
  }
  Matrix out(1, 1, total);
  return t.record(std::move(out), ids, [ids, ws](Tape& t, int self) {
    const double g = t.grad(self).data()[0];
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.needs_grad(ids[i])) t.grad(ids[i]).data()[0] += ws[i] * g;
  });
}

}  // namespace pex::nn
