// SPDX-License-Identifier: Apache-2.0

#include "pex/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pex/errors.hpp"
#include "pex/tokenizer.hpp"

namespace pex::decoding {

void DecodeConfig::validate() const {
  if (beams < 1) throw ParameterError("beams must be >= 1");
  if (max_len < 1) throw ParameterError("max_len must be >= 1");
  if (!(repetition_penalty >= 1.0)) throw ParameterError("repetition penalty must be >= 1");
  if (num_return < 1 || num_return > beams)
    throw ParameterError("num_return must lie in [1, beams], got " + std::to_string(num_return));
  if (!std::isfinite(length_normalization_alpha) || length_normalization_alpha < 0.0)
    throw ParameterError("length_normalization_alpha must be a finite value >= 0");
}

std::vector<double> apply_repetition_penalty(std::span<const double> logits, std::span<const int> generated,
                                             double theta) {
  if (!(theta >= 1.0)) throw ParameterError("repetition penalty must be >= 1, got " + std::to_string(theta));
  std::vector<double> out(logits.begin(), logits.end());
  if (theta == 1.0) return out;
  std::vector<unsigned char> seen(out.size(), 0);
  for (int id : generated) {
    if (id < 0 || static_cast<std::size_t>(id) >= out.size())
      throw DecodeError("generated id " + std::to_string(id) + " outside vocabulary");
    if (seen[static_cast<std::size_t>(id)]) continue;
    seen[static_cast<std::size_t>(id)] = 1;
    double& x = out[static_cast<std::size_t>(id)];
    x = x > 0.0 ? x / theta : x * theta;
  }
  return out;
}

GeneratorScorer::GeneratorScorer(const nn::Generator& model, std::span<const int> src) : model_(model) {
  if (src.empty()) throw ParameterError("beam search needs a non-empty source");
  nn::Tape t = nn::Tape::inference();
  memory_ = model.encode(t, src).value();
}

std::size_t GeneratorScorer::vocab_size() const { return model_.config().generator_vocab_size; }

std::vector<double> GeneratorScorer::next_logits(std::span<const int> prefix) const {
  std::vector<int> input;
  input.reserve(prefix.size() + 1);
  input.push_back(nn::kDecoderStart);
  input.insert(input.end(), prefix.begin(), prefix.end());
  nn::Tape t = nn::Tape::inference();
  nn::Var hidden = model_.decode(t, t.constant(memory_), input);
  return model_.project(t, nn::select_row(hidden, input.size() - 1)).value().storage();
}

namespace {

std::vector<double> log_softmax(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - m);
  const double lz = m + std::log(z);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lz;
  return out;
}

double normalized(double log_prob, std::size_t length, double alpha) {
  return alpha == 0.0 ? log_prob : log_prob / std::pow(static_cast<double>(length), alpha);
}

std::vector<double> step_log_probs(const NextTokenModel& model, std::span<const int> prefix, double theta) {
  std::vector<double> logits = model.next_logits(prefix);
  if (logits.size() != model.vocab_size())
    throw ShapeError("next-token model returned " + std::to_string(logits.size()) + " logits for vocabulary " +
                     std::to_string(model.vocab_size()));
  return log_softmax(apply_repetition_penalty(logits, prefix, theta));
}

struct Candidate {
  double score;
  double log_prob;
  int token;
  std::size_t beam;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.token != b.token) return a.token < b.token;
  return a.beam < b.beam;
}

bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ids < b.ids;
}

}  // namespace

std::vector<Hypothesis> beam_search(const NextTokenModel& model, const DecodeConfig& config) {
  config.validate();
  const double alpha = config.length_normalization_alpha;
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  std::vector<Candidate> candidates;

  for (std::size_t step = 0; step < config.max_len && !live.empty(); ++step) {
    const std::size_t length = step + 1;
    candidates.clear();
    for (std::size_t b = 0; b < live.size(); ++b) {
      const std::vector<double> lp = step_log_probs(model, live[b].ids, config.repetition_penalty);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const double log_prob = live[b].log_prob + lp[v];
        if (std::isnan(log_prob)) throw DecodeError("non-finite score during beam search");
        candidates.push_back({normalized(log_prob, length, alpha), log_prob, static_cast<int>(v), b});
      }
    }
    const std::size_t keep = std::min(config.beams, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);

    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      Hypothesis h;
      h.ids = live[c.beam].ids;
      h.ids.push_back(c.token);
      h.log_prob = c.log_prob;
      h.score = c.score;
      h.finished = c.token == tok::kEos || length == config.max_len;
      (h.finished ? finished : next).push_back(std::move(h));
    }
    live = std::move(next);

    if (finished.size() >= config.num_return && !live.empty()) {
      std::vector<Hypothesis> top = finished;
      std::partial_sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(config.num_return), top.end(),
                        hyp_better);
      const double worst_kept = top[config.num_return - 1].score;
      double best_live = -std::numeric_limits<double>::infinity();
      for (const Hypothesis& h : live) best_live = std::max(best_live, h.score);
      if (best_live <= worst_kept) break;
    }
  }

  std::sort(finished.begin(), finished.end(), hyp_better);
  if (finished.size() > config.num_return) finished.resize(config.num_return);
  return finished;
}

std::vector<Hypothesis> beam_search(const nn::Generator& model, std::span<const int> src,
                                    const DecodeConfig& config) {
  config.validate();
  GeneratorScorer scorer(model, src);
  return beam_search(scorer, config);
}

Hypothesis greedy_decode(const NextTokenModel& model, std::size_t max_len, double repetition_penalty,
                         double length_normalization_alpha) {
  if (max_len < 1) throw ParameterError("max_len must be >= 1");
  Hypothesis h;
  while (h.ids.size() < max_len) {
    const std::vector<double> lp = step_log_probs(model, h.ids, repetition_penalty);
    const auto best = std::max_element(lp.begin(), lp.end());  // first maximum: lowest id
    h.ids.push_back(static_cast<int>(best - lp.begin()));
    h.log_prob += *best;
    if (h.ids.back() == tok::kEos) break;
  }
  h.finished = true;
  h.score = normalized(h.log_prob, h.ids.size(), length_normalization_alpha);
  return h;
}

}  // namespace pex::decoding
