// SPDX-License-Identifier: Apache-2.0

#include "pex/optim.hpp"

#include <algorithm>
#include <cmath>

#include "pex/errors.hpp"

namespace pex::optim {

void AdamW::step(nn::ParameterSet& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw ParameterError("AdamW: parameter set changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& p : params) {
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const bool decay = opt_.weight_decay != 0.0 && p->value.rows() > 1;
    const std::size_t n = p->value.size();
    for (std::size_t k = 0; k < n; ++k) {
      if (decay) w[k] -= lr * opt_.weight_decay * w[k];
      m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g[k];
      v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + opt_.eps);
    }
    ++i;
  }
}

void Adafactor::step(nn::ParameterSet& params, double lr) {
  if (state_.empty()) {
    for (const auto& p : params) {
      State s;
      s.factored = p->value.rows() > 1 && p->value.cols() > 1;
      if (s.factored) {
        s.row.assign(p->value.rows(), 0.0);
        s.col.assign(p->value.cols(), 0.0);
      } else {
        s.v = Matrix(p->value.rows(), p->value.cols());
      }
      state_.push_back(std::move(s));
    }
  }
  if (state_.size() != params.size()) throw ParameterError("Adafactor: parameter set changed between steps");
  ++t_;
  const double beta2t = 1.0 - std::pow(static_cast<double>(t_), opt_.decay_rate);
  std::size_t i = 0;
  for (auto& p : params) {
    State& s = state_[i++];
    const std::size_t rows = p->value.rows(), cols = p->value.cols();
    const Matrix& g = p->grad;
    Matrix update(rows, cols);
    if (s.factored) {
      std::vector<double> row_mean(rows, 0.0), col_mean(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          const double u = g(r, c) * g(r, c) + opt_.eps1;
          row_mean[r] += u / static_cast<double>(cols);
          col_mean[c] += u / static_cast<double>(rows);
        }
      double row_avg = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        s.row[r] = beta2t * s.row[r] + (1.0 - beta2t) * row_mean[r];
        row_avg += s.row[r] / static_cast<double>(rows);
      }
      for (std::size_t c = 0; c < cols; ++c) s.col[c] = beta2t * s.col[c] + (1.0 - beta2t) * col_mean[c];
      for (std::size_t r = 0; r < rows; ++r) {
        const double rf = 1.0 / std::sqrt(s.row[r] / row_avg);
        for (std::size_t c = 0; c < cols; ++c) update(r, c) = rf / std::sqrt(s.col[c]) * g(r, c);
      }
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) {
        double& v = s.v.data()[k];
        v = beta2t * v + (1.0 - beta2t) * (g.data()[k] * g.data()[k] + opt_.eps1);
        update.data()[k] = g.data()[k] / std::sqrt(v);
      }
    }
    double ss = 0.0;
    for (double u : update.storage()) ss += u * u;
    const double rms = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(update.size(), 1)));
    const double denom = std::max(1.0, rms / opt_.clip_threshold);
    double* w = p->value.data();
    for (std::size_t k = 0; k < update.size(); ++k) w[k] -= lr * update.data()[k] / denom;
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& name) {
  if (name == "adamw") return std::make_unique<AdamW>();
  if (name == "adafactor") return std::make_unique<Adafactor>();
  throw ConfigError("unknown optimizer '" + name + "' (expected adamw or adafactor)");
}

double linear_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps) {
  if (step < warmup_steps) return static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return step < total_steps ? 1.0 : 0.0;
  return std::max(0.0, static_cast<double>(total_steps - std::min(step, total_steps)) /
                           static_cast<double>(total_steps - warmup_steps));
}

double clip_grad_norm(nn::ParameterSet& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ParameterError("clip norm must be > 0");
  const double norm = params.grad_norm();
  if (norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (auto& p : params)
      for (double& g : p->grad.storage()) g *= s;
  }
  return norm;
}

}  // namespace pex::optim
