// SPDX-License-Identifier: Apache-2.0
//
// Reference models standing in for pre-trained encoders: a self-attention
// classifier encoder with the per-option prediction head, and an
// encoder-decoder generator with a token projection and a K-way label head
// max-pooled over decoder states.
//
// Hidden states are stored one position per row: an encoded sequence of
// length T is a T x d matrix. Linear maps are stored out x in and applied
// as x * W^T + b.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pex/autodiff.hpp"
#include "pex/corpus.hpp"

namespace pex::nn {

struct ModelConfig {
  std::size_t d = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_size = 128;
  std::size_t classifier_vocab_size = 0;
  std::size_t generator_vocab_size = 0;
  /// Options per question (MCQA) or classes (NLI).
  std::size_t K = 4;
  double dropout = 0.1;
  /// Longest sequence either model accepts.
  std::size_t max_positions = 256;
  corpus::Task task = corpus::Task::Mcqa;

  /// Scores per classifier instance: 1 per option for MCQA, K classes for NLI.
  std::size_t classifier_outputs() const { return task == corpus::Task::Mcqa ? 1 : K; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// p = W2 tanh(W1 h + b1)
struct PredictionHead {
  Matrix W1;  // d x d
  Matrix b1;  // 1 x d
  Matrix W2;  // outputs x d
};

/// Per-step vocabulary logits W h_t + b2.
struct TokenProjection {
  Matrix W;   // V x d
  Matrix b2;  // 1 x V
};

/// g = max over t of (W3 h_t + b3)
struct GeneratorLabelHead {
  Matrix W3;  // K x d
  Matrix b3;  // 1 x K
};

/// Decoder input for teacher forcing: [start] + target[0 .. T-2].
inline constexpr int kDecoderStart = 1;  // the CLS id
std::vector<int> shift_right(std::span<const int> target);

/// Sinusoidal position table, max_positions x d.
Matrix sinusoidal_positions(std::size_t max_positions, std::size_t d);

class Classifier {
 public:
  Classifier(const ModelConfig& config, std::uint64_t seed);
  /// Adopts existing parameters (e.g. from a checkpoint); names must match.
  Classifier(const ModelConfig& config, const ParameterSet& params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Last-layer state at position 0, 1 x d. `ids` must start with CLS.
  Var encode_first(Tape& tape, std::span<const int> ids) const;
  /// Head applied to a 1 x d state; 1 x classifier_outputs().
  Var head(Tape& tape, Var h) const;
  Var scores(Tape& tape, std::span<const int> ids) const { return head(tape, encode_first(tape, ids)); }

  PredictionHead prediction_head() const;

 private:
  void init(std::uint64_t seed);

  ModelConfig config_;
  ParameterSet params_;
  Matrix positions_;
};

struct GeneratorPass {
  Var logits;  // T x V
  Var hidden;  // T x d, last decoder layer after the final norm
};

class Generator {
 public:
  Generator(const ModelConfig& config, std::uint64_t seed);
  Generator(const ModelConfig& config, const ParameterSet& params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Masks are empty (all real) or one byte per position.
  Var encode(Tape& tape, std::span<const int> src, std::span<const unsigned char> src_mask = {}) const;
  Var decode(Tape& tape, Var memory, std::span<const int> tgt_in,
             std::span<const unsigned char> src_mask = {},
             std::span<const unsigned char> tgt_mask = {}) const;
  Var project(Tape& tape, Var hidden) const;
  /// Teacher-forced pass: `tgt_in` is the right-shifted target.
  GeneratorPass forward(Tape& tape, std::span<const int> src, std::span<const int> tgt_in,
                        std::span<const unsigned char> src_mask = {},
                        std::span<const unsigned char> tgt_mask = {}) const;
  /// K label logits max-pooled over the unmasked decoder positions.
  Var label_logits(Tape& tape, Var hidden, std::span<const unsigned char> tgt_mask = {}) const;

  TokenProjection token_projection() const;
  GeneratorLabelHead label_head() const;

 private:
  void init(std::uint64_t seed);

  ModelConfig config_;
  ParameterSet params_;
  Matrix positions_;
};

// Value-level entry points (inference mode, dropout off).

/// First-token hidden vector h (1 x d).
Matrix classifier_encode(const Classifier& model, std::span<const int> ids);
double score_option(std::span<const double> h, const PredictionHead& head);
/// Max-shifted softmax.
std::vector<double> option_distribution(std::span<const double> scores);

struct GeneratorOutputs {
  Matrix logits;  // T x V
  Matrix hidden;  // T x d
};
GeneratorOutputs generator_forward(const Generator& model, std::span<const int> src,
                                   std::span<const int> tgt_in,
                                   std::span<const unsigned char> src_mask = {},
                                   std::span<const unsigned char> tgt_mask = {});
/// g_k = max over unmasked t of (W3 h_t + b3)_k; PoolingError when all masked.
Matrix generator_label_logits(const Matrix& hidden, const GeneratorLabelHead& head,
                              std::span<const unsigned char> mask = {});

// Tape forms of the heads, shared by the models and the gradient checks.
Var prediction_head(Tape& tape, Var h, Var W1, Var b1, Var W2);
Var label_head(Tape& tape, Var hidden, Var W3, Var b3, std::span<const unsigned char> mask);

}  // namespace pex::nn
