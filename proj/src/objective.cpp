// SPDX-License-Identifier: Apache-2.0

#include "pex/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace pex::objective {

void LossWeights::validate() const {
  for (double w : {ce, mle, ce_g, dis})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("loss weights must be finite and >= 0");
  if (!(tau > 0.0)) throw ParameterError("distillation temperature must be > 0");
}

std::vector<int> one_hot_to_indices(const Matrix& one_hot) {
  std::vector<int> out(one_hot.rows());
  for (std::size_t r = 0; r < one_hot.rows(); ++r) {
    int hot = -1;
    for (std::size_t c = 0; c < one_hot.cols(); ++c) {
      const double v = one_hot(r, c);
      if (v == 1.0 && hot < 0) {
        hot = static_cast<int>(c);
      } else if (v != 0.0) {
        throw ShapeError("row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (hot < 0) throw ShapeError("row " + std::to_string(r) + " is not one-hot");
    out[r] = hot;
  }
  return out;
}

Matrix log_softmax_rows(const Matrix& logits, double temperature) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto dst = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v / temperature);
    double sum = 0.0;
    for (double v : in) sum += std::exp(v / temperature - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < in.size(); ++c) dst[c] = in[c] / temperature - lse;
  }
  return out;
}

namespace {

void check_answers(const Matrix& scores, std::span<const int> answers, const char* what) {
  if (answers.size() != scores.rows())
    throw ShapeError(std::string(what) + ": " + std::to_string(answers.size()) +
                     " answers for " + scores.shape_str() + " scores");
  if (scores.rows() == 0) throw LossError(std::string(what) + ": empty batch");
  for (int a : answers)
    if (a < 0 || static_cast<std::size_t>(a) >= scores.cols())
      throw ShapeError(std::string(what) + ": answer " + std::to_string(a) + " outside K=" +
                       std::to_string(scores.cols()));
}

}  // namespace

double classification_loss(const Matrix& scores, std::span<const int> answers,
                           Reduction reduction, Matrix* grad) {
  check_answers(scores, answers, "classification_loss");
  const Matrix logp = log_softmax_rows(scores);
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(scores.rows()) : 1.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.rows(); ++i) loss -= logp(i, static_cast<std::size_t>(answers[i]));
  if (grad) {
    *grad = Matrix(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i)
      for (std::size_t k = 0; k < scores.cols(); ++k)
        (*grad)(i, k) = norm * (std::exp(logp(i, k)) - (static_cast<int>(k) == answers[i] ? 1.0 : 0.0));
  }
  return loss * norm;
}

double classification_loss(const Matrix& scores, const Matrix& one_hot, Reduction reduction,
                           Matrix* grad) {
  if (!scores.same_shape(one_hot))
    throw ShapeError("classification_loss: scores " + scores.shape_str() + " vs answers " +
                     one_hot.shape_str());
  const std::vector<int> answers = one_hot_to_indices(one_hot);
  return classification_loss(scores, answers, reduction, grad);
}

double generator_label_loss(const Matrix& g, std::span<const int> answers, Reduction reduction,
                            Matrix* grad) {
  return classification_loss(g, answers, reduction, grad);
}

double mle_loss(const Matrix& logits, std::span<const int> targets,
                std::span<const unsigned char> mask, Reduction reduction, Matrix* grad) {
  if (targets.size() != logits.rows())
    throw ShapeError("mle_loss: " + std::to_string(targets.size()) + " targets for " +
                     logits.shape_str() + " logits");
  if (!mask.empty() && mask.size() != targets.size())
    throw ShapeError("mle_loss: mask length " + std::to_string(mask.size()));
  std::size_t count = 0;
  for (std::size_t t = 0; t < targets.size(); ++t)
    if (mask.empty() || mask[t]) ++count;
  if (count == 0) throw LossError("mle_loss: no unmasked target positions");

  const Matrix logp = log_softmax_rows(logits);
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(count) : 1.0;
  double loss = 0.0;
  if (grad) *grad = Matrix(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!mask.empty() && !mask[t]) continue;
    const int y = targets[t];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
      throw ShapeError("mle_loss: target id " + std::to_string(y) + " outside V=" +
                       std::to_string(logits.cols()));
    loss -= logp(t, static_cast<std::size_t>(y));
    if (grad)
      for (std::size_t v = 0; v < logits.cols(); ++v)
        (*grad)(t, v) = norm * (std::exp(logp(t, v)) - (static_cast<int>(v) == y ? 1.0 : 0.0));
  }
  return loss * norm;
}

double distillation_loss(const Matrix& p, const Matrix& g, const DistillOptions& options,
                         Matrix* grad_p, Matrix* grad_g) {
  if (!(options.tau > 0.0)) throw ParameterError("distillation temperature must be > 0");
  if (!p.same_shape(g))
    throw ShapeError("distillation_loss: " + p.shape_str() + " vs " + g.shape_str());
  if (p.rows() == 0) throw LossError("distillation_loss: empty batch");
  const double tau = options.tau;
  const Matrix logq_p = log_softmax_rows(p, tau);
  const Matrix logq_g = log_softmax_rows(g, tau);
  double norm = options.reduction == Reduction::Mean ? 1.0 / static_cast<double>(p.rows()) : 1.0;
  if (options.scale_by_tau_sq) norm *= tau * tau;

  double loss = 0.0;
  if (grad_p) *grad_p = Matrix(p.rows(), p.cols());
  if (grad_g) *grad_g = Matrix(g.rows(), g.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double row = 0.0;
    for (std::size_t k = 0; k < p.cols(); ++k)
      row += std::exp(logq_g(i, k)) * (logq_g(i, k) - logq_p(i, k));
    loss += row;
    if (grad_p)
      for (std::size_t k = 0; k < p.cols(); ++k)
        (*grad_p)(i, k) = norm / tau * (std::exp(logq_p(i, k)) - std::exp(logq_g(i, k)));
    if (grad_g && !options.detach_target)
      for (std::size_t k = 0; k < g.cols(); ++k) {
        const double q = std::exp(logq_g(i, k));
        (*grad_g)(i, k) = norm / tau * q * ((logq_g(i, k) - logq_p(i, k)) - row);
      }
  }
  return loss * norm;
}

double total_loss(const LossReport& parts, const LossWeights& weights) {
  for (double v : {parts.ce, parts.mle, parts.ce_g, parts.dis})
    if (std::isnan(v)) throw LossError("total_loss: NaN loss component");
  return weights.ce * parts.ce + weights.mle * parts.mle + weights.ce_g * parts.ce_g +
         weights.dis * parts.dis;
}

// ------------------------------------------------------------------ tape ops

nn::Var classification_loss(nn::Var scores, std::span<const int> answers, Reduction reduction) {
  auto grad = std::make_shared<Matrix>();
  const double v = classification_loss(scores.value(), answers, reduction, grad.get());
  const int is = scores.id;
  return scores.tape->record(Matrix(1, 1, v), {is}, [is, grad](nn::Tape& t, int self) {
    kernels::axpy(t.grad(self).data()[0], *grad, t.grad(is));
  });
}

nn::Var mle_loss(nn::Var logits, std::span<const int> targets, std::span<const unsigned char> mask,
                 Reduction reduction) {
  auto grad = std::make_shared<Matrix>();
  const double v = mle_loss(logits.value(), targets, mask, reduction, grad.get());
  const int il = logits.id;
  return logits.tape->record(Matrix(1, 1, v), {il}, [il, grad](nn::Tape& t, int self) {
    kernels::axpy(t.grad(self).data()[0], *grad, t.grad(il));
  });
}

nn::Var distillation_loss(nn::Var p, nn::Var g, const DistillOptions& options) {
  if (p.tape != g.tape) throw Error("distillation_loss: variables on different tapes");
  auto gp = std::make_shared<Matrix>();
  auto gg = std::make_shared<Matrix>();
  const double v = distillation_loss(p.value(), g.value(), options, gp.get(), gg.get());
  const int ip = p.id, ig = g.id;
  const bool detach = options.detach_target;
  return p.tape->record(Matrix(1, 1, v), {ip, ig}, [ip, ig, gp, gg, detach](nn::Tape& t, int self) {
    const double s = t.grad(self).data()[0];
    if (t.needs_grad(ip)) kernels::axpy(s, *gp, t.grad(ip));
    if (!detach && t.needs_grad(ig)) kernels::axpy(s, *gg, t.grad(ig));
  });
}

}  // namespace pex::objective
