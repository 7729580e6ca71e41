// SPDX-License-Identifier: Apache-2.0
//
// The four training terms and their weighted combination:
//   ce    cross-entropy of the classifier's per-option scores
//   mle   token-level negative log-likelihood of the generator
//   ce_g  cross-entropy of the generator's pooled label logits
//   dis   KL(softmax(g/tau) || softmax(p/tau)) tying the two together
//
// Each term is available as a plain function (value plus optional analytic
// gradient) and as a tape operation for training.

#pragma once

#include <cstddef>
#include <span>

#include "pex/autodiff.hpp"
#include "pex/kernels.hpp"

namespace pex::objective {

/// Mean divides each term by its natural count (samples, or unmasked
/// tokens for mle); Sum reproduces the literal summed form.
enum class Reduction { Mean, Sum };

struct LossWeights {
  double ce = 1.0;    // lambda1
  double mle = 1.0;   // lambda2
  double ce_g = 1.0;  // lambda3
  double dis = 1.0;   // lambda4
  double tau = 1.0;

  void validate() const;
};

struct DistillOptions {
  double tau = 1.0;
  /// Stop gradients into the generator-side logits.
  bool detach_target = false;
  /// Multiply the term by tau^2 (only matters for tau != 1).
  bool scale_by_tau_sq = false;
  Reduction reduction = Reduction::Mean;
};

struct LossReport {
  double ce = 0.0;
  double mle = 0.0;
  double ce_g = 0.0;
  double dis = 0.0;
  double total = 0.0;
  std::size_t token_count = 0;
  std::size_t sample_count = 0;
};

/// Validates a one-hot N x K matrix and returns the hot index per row.
std::vector<int> one_hot_to_indices(const Matrix& one_hot);

/// Row-wise log-softmax, max-shifted.
Matrix log_softmax_rows(const Matrix& logits, double temperature = 1.0);

double classification_loss(const Matrix& scores, std::span<const int> answers,
                           Reduction reduction = Reduction::Mean, Matrix* grad = nullptr);
double classification_loss(const Matrix& scores, const Matrix& one_hot,
                           Reduction reduction = Reduction::Mean, Matrix* grad = nullptr);

/// Same contract as classification_loss, applied to the generator's label logits.
double generator_label_loss(const Matrix& g, std::span<const int> answers,
                            Reduction reduction = Reduction::Mean, Matrix* grad = nullptr);

/// `mask` is empty (all positions real) or one byte per target position.
double mle_loss(const Matrix& logits, std::span<const int> targets,
                std::span<const unsigned char> mask = {}, Reduction reduction = Reduction::Mean,
                Matrix* grad = nullptr);

double distillation_loss(const Matrix& p, const Matrix& g, const DistillOptions& options = {},
                         Matrix* grad_p = nullptr, Matrix* grad_g = nullptr);

/// lambda1*ce + lambda2*mle + lambda3*ce_g + lambda4*dis; throws LossError on NaN parts.
double total_loss(const LossReport& parts, const LossWeights& weights);

// Tape variants; the returned Var is 1x1.
nn::Var classification_loss(nn::Var scores, std::span<const int> answers,
                            Reduction reduction = Reduction::Mean);
nn::Var mle_loss(nn::Var logits, std::span<const int> targets,
                 std::span<const unsigned char> mask = {}, Reduction reduction = Reduction::Mean);
nn::Var distillation_loss(nn::Var p, nn::Var g, const DistillOptions& options = {});

}  // namespace pex::objective
