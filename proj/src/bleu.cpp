// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "pex/errors.hpp"
#include "pex/evalsuite.hpp"
#include "pex/tokenizer.hpp"

namespace pex::eval {

namespace {

using Ngrams = std::map<std::vector<std::string>, std::size_t>;

Ngrams count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

}  // namespace

double corpus_bleu(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references,
                   std::size_t max_order) {
  if (candidates.size() != references.size())
    throw EvalError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates, " +
                    std::to_string(references.size()) + " reference lists");
  if (candidates.empty()) throw EvalError("corpus_bleu: no candidates");
  if (max_order < 1) throw ParameterError("corpus_bleu: max_order must be >= 1");

  std::vector<std::size_t> matches(max_order, 0), totals(max_order, 0);
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    if (references[s].empty()) throw EvalError("corpus_bleu: segment " + std::to_string(s) + " has no reference");
    const auto cand = tok::split_whitespace(candidates[s]);
    std::vector<std::vector<std::string>> refs;
    for (const std::string& r : references[s]) refs.push_back(tok::split_whitespace(r));

    cand_len += cand.size();
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (d(r.size()) < d(closest) || (d(r.size()) == d(closest) && r.size() < closest)) closest = r.size();
    }
    ref_len += closest;

    for (std::size_t n = 1; n <= max_order; ++n) {
      const Ngrams c = count_ngrams(cand, n);
      Ngrams max_ref;
      for (const auto& r : refs)
        for (const auto& [gram, count] : count_ngrams(r, n)) max_ref[gram] = std::max(max_ref[gram], count);
      for (const auto& [gram, count] : c) {
        const auto it = max_ref.find(gram);
        if (it != max_ref.end()) matches[n - 1] += std::min(count, it->second);
      }
      totals[n - 1] += cand.size() >= n ? cand.size() - n + 1 : 0;
    }
  }

  if (cand_len == 0 || matches[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_order; ++n) {
    const double p = matches[n] > 0 ? static_cast<double>(matches[n]) / static_cast<double>(totals[n])
                                    : 1.0 / static_cast<double>(totals[n] + 1);
    log_sum += std::log(p);
  }
  const double bp =
      cand_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(max_order));
}

}  // namespace pex::eval
