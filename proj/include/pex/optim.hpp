// SPDX-License-Identifier: Apache-2.0
//
// Optimizers, learning-rate schedule and gradient clipping.

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "pex/autodiff.hpp"

namespace pex::optim {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// One update of every parameter from its accumulated gradient.
  virtual void step(nn::ParameterSet& params, double lr) = 0;
  virtual std::size_t steps_taken() const = 0;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled decay; skipped for 1 x n tensors (biases, norm gains).
  double weight_decay = 0.01;
};

class AdamW final : public Optimizer {
 public:
  explicit AdamW(AdamWOptions options = {}) : opt_(options) {}
  void step(nn::ParameterSet& params, double lr) override;
  std::size_t steps_taken() const override { return t_; }

 private:
  AdamWOptions opt_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Adafactor with an external learning rate (no relative step, no
/// parameter scaling, no first moment).
struct AdafactorOptions {
  double eps1 = 1e-30;
  double clip_threshold = 1.0;
  double decay_rate = -0.8;
};

class Adafactor final : public Optimizer {
 public:
  explicit Adafactor(AdafactorOptions options = {}) : opt_(options) {}
  void step(nn::ParameterSet& params, double lr) override;
  std::size_t steps_taken() const override { return t_; }

 private:
  struct State {
    bool factored = false;
    std::vector<double> row, col;  // factored second moment
    Matrix v;                      // unfactored second moment
  };
  AdafactorOptions opt_;
  std::size_t t_ = 0;
  std::vector<State> state_;
};

/// "adamw" or "adafactor"; ConfigError otherwise.
std::unique_ptr<Optimizer> make_optimizer(const std::string& name);

/// Multiplier for optimizer step `step` (0-based): linear warmup over
/// warmup_steps, then linear decay to 0 at total_steps.
double linear_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(nn::ParameterSet& params, double max_norm);

}  // namespace pex::optim
