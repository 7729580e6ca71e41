// SPDX-License-Identifier: Apache-2.0
//
// Beam search with a repetition penalty over any next-token model.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pex/kernels.hpp"
#include "pex/netcore.hpp"

namespace pex::decoding {

struct DecodeConfig {
  std::size_t beams = 20;
  std::size_t max_len = 200;
  double repetition_penalty = 1.5;
  std::size_t num_return = 1;
  double length_normalization_alpha = 0.0;

  void validate() const;
};

struct Hypothesis {
  /// Generated ids, EOS included when the hypothesis ended on it.
  std::vector<int> ids;
  double log_prob = 0.0;
  /// log_prob / len^alpha; equals log_prob when alpha is 0.
  double score = 0.0;
  bool finished = false;
};

/// Logit x of every id in `generated` becomes x/theta when positive, x*theta
/// otherwise. Repeated ids are penalized once.
std::vector<double> apply_repetition_penalty(std::span<const double> logits, std::span<const int> generated,
                                             double theta);

/// Scores the next token given the ids generated so far.
class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> next_logits(std::span<const int> prefix) const = 0;
};

/// Wraps a generator with its source encoded once.
class GeneratorScorer final : public NextTokenModel {
 public:
  GeneratorScorer(const nn::Generator& model, std::span<const int> src);
  std::size_t vocab_size() const override;
  std::vector<double> next_logits(std::span<const int> prefix) const override;

 private:
  const nn::Generator& model_;
  Matrix memory_;
};

/// Returns min(num_return, #finished) hypotheses, best first.
std::vector<Hypothesis> beam_search(const NextTokenModel& model, const DecodeConfig& config);
std::vector<Hypothesis> beam_search(const nn::Generator& model, std::span<const int> src,
                                    const DecodeConfig& config);

/// Argmax at every step (lowest id on ties), same penalty and stopping rules.
Hypothesis greedy_decode(const NextTokenModel& model, std::size_t max_len, double repetition_penalty = 1.0,
                         double length_normalization_alpha = 0.0);

}  // namespace pex::decoding
