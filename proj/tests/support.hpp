// Helpers shared by the unit tests and the acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pex/decoding.hpp"
#include "pex/kernels.hpp"
#include "pex/random.hpp"
#include "pex/tokenizer.hpp"

namespace pex::testing {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.storage()) v = scale * standard_normal(rng);
  return m;
}

inline double frobenius(const Matrix& m) {
  double s = 0.0;
  for (double v : m.storage()) s += v * v;
  return std::sqrt(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

/// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  const double scale = std::max(frobenius(a), frobenius(b));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central differences of f with respect to every entry of x. x is restored.
inline Matrix numeric_gradient(Matrix& x, const std::function<double()>& f, double step = 1e-4) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + step;
    const double up = f();
    x.data()[i] = keep - step;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Next-token model whose logits are any function of the prefix.
class FnModel final : public decoding::NextTokenModel {
 public:
  FnModel(std::size_t v, std::function<std::vector<double>(std::span<const int>)> f) : v_(v), f_(std::move(f)) {}
  std::size_t vocab_size() const override { return v_; }
  std::vector<double> next_logits(std::span<const int> prefix) const override { return f_(prefix); }

 private:
  std::size_t v_;
  std::function<std::vector<double>(std::span<const int>)> f_;
};

/// Logits are a pure function of (model seed, prefix).
inline FnModel random_table(std::uint64_t seed, std::size_t v) {
  return FnModel(v, [seed, v](std::span<const int> prefix) {
    std::uint64_t key = seed;
    for (int id : prefix) key = derive_seed(key, static_cast<std::uint64_t>(id) + 1);
    Rng rng(key);
    std::vector<double> out(v);
    for (double& x : out) x = 3.0 * standard_normal(rng);
    return out;
  });
}

inline double log_softmax_at(const std::vector<double>& x, int id) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  double z = 0.0;
  for (double v : x) z += std::exp(v - m);
  return x[static_cast<std::size_t>(id)] - m - std::log(z);
}

struct BestSequence {
  std::vector<int> ids;
  double log_prob = -std::numeric_limits<double>::infinity();
};

/// Depth-first walk over every sequence that ends on EOS or at max_len.
inline void enumerate_sequences(const decoding::NextTokenModel& m, std::vector<int>& prefix, double lp,
                                std::size_t max_len, BestSequence& best) {
  const std::vector<double> logits = m.next_logits(prefix);
  for (int v = 0; v < static_cast<int>(m.vocab_size()); ++v) {
    prefix.push_back(v);
    const double next = lp + log_softmax_at(logits, v);
    if (v == tok::kEos || prefix.size() == max_len) {
      if (next > best.log_prob) best = {prefix, next};
    } else {
      enumerate_sequences(m, prefix, next, max_len, best);
    }
    prefix.pop_back();
  }
}

inline BestSequence exhaustive_best(const decoding::NextTokenModel& m, std::size_t max_len) {
  BestSequence best;
  std::vector<int> prefix;
  enumerate_sequences(m, prefix, 0.0, max_len, best);
  return best;
}

// Second BLEU implementation: n-grams keyed by joined strings, precisions
// multiplied directly.
namespace oracle {

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::unordered_map<std::string, int> grams(const std::vector<std::string>& w, std::size_t n) {
  std::unordered_map<std::string, int> out;
  if (w.size() < n) return out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) {
    std::string key;
    for (std::size_t j = i; j < i + n; ++j) key += w[j] + '\x1f';
    out[key] += 1;
  }
  return out;
}

inline double bleu(const std::vector<std::string>& cands, const std::vector<std::vector<std::string>>& refs) {
  constexpr std::size_t N = 4;
  long num[N] = {0, 0, 0, 0}, den[N] = {0, 0, 0, 0};
  long c = 0, r = 0;
  for (std::size_t s = 0; s < cands.size(); ++s) {
    const auto cw = words(cands[s]);
    c += static_cast<long>(cw.size());
    long best = -1;
    for (const auto& ref : refs[s]) {
      const long len = static_cast<long>(words(ref).size());
      const long gap = std::labs(len - static_cast<long>(cw.size()));
      if (best < 0 || gap < std::labs(best - static_cast<long>(cw.size())) ||
          (gap == std::labs(best - static_cast<long>(cw.size())) && len < best))
        best = len;
    }
    r += best;
    for (std::size_t n = 1; n <= N; ++n) {
      std::unordered_map<std::string, int> cap;
      for (const auto& ref : refs[s])
        for (const auto& [k, v] : grams(words(ref), n)) cap[k] = std::max(cap[k], v);
      for (const auto& [k, v] : grams(cw, n)) {
        num[n - 1] += std::min(v, cap.count(k) ? cap[k] : 0);
        den[n - 1] += v;
      }
    }
  }
  if (c == 0 || num[0] == 0) return 0.0;
  double product = 1.0;
  for (std::size_t n = 0; n < N; ++n)
    product *= num[n] == 0 ? 1.0 / static_cast<double>(den[n] + 1) : static_cast<double>(num[n]) / den[n];
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return 100.0 * bp * std::pow(product, 1.0 / N);
}

}  // namespace oracle
}  // namespace pex::testing
