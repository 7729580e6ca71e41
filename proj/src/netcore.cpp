// SPDX-License-Identifier: Apache-2.0

#include "pex/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pex/random.hpp"
#include "pex/tokenizer.hpp"

namespace pex::nn {

void ModelConfig::validate() const {
  if (d == 0 || num_heads == 0 || d % num_heads != 0)
    throw ParameterError("hidden size " + std::to_string(d) + " not divisible by " +
                         std::to_string(num_heads) + " heads");
  if (num_layers == 0) throw ParameterError("num_layers must be >= 1");
  if (ffn_size == 0) throw ParameterError("ffn_size must be >= 1");
  if (K < 2) throw ParameterError("K must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  if (max_positions == 0) throw ParameterError("max_positions must be >= 1");
}

std::vector<int> shift_right(std::span<const int> target) {
  std::vector<int> out;
  out.reserve(target.size());
  out.push_back(kDecoderStart);
  for (std::size_t i = 0; i + 1 < target.size(); ++i) out.push_back(target[i]);
  if (target.empty()) out.clear();
  return out;
}

Matrix sinusoidal_positions(std::size_t max_positions, std::size_t d) {
  Matrix pe(max_positions, d);
  for (std::size_t pos = 0; pos < max_positions; ++pos)
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d) pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
  return pe;
}

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  for (double& v : m.storage()) v = stddev * standard_normal(rng);
  return m;
}

void add_linear(ParameterSet& ps, Rng& rng, const std::string& w, const std::string& b, std::size_t out,
                std::size_t in) {
  ps.add(w, random_matrix(rng, out, in, 1.0 / std::sqrt(static_cast<double>(in))));
  if (!b.empty()) ps.add(b, Matrix(1, out));
}

void add_norm(ParameterSet& ps, const std::string& prefix, std::size_t d) {
  ps.add(prefix + ".g", Matrix(1, d, 1.0));
  ps.add(prefix + ".b", Matrix(1, d));
}

void add_attention(ParameterSet& ps, Rng& rng, const std::string& prefix, std::size_t d) {
  for (const char* x : {"q", "k", "v", "o"})
    add_linear(ps, rng, prefix + ".w" + x, prefix + ".b" + x, d, d);
}

void add_ffn(ParameterSet& ps, Rng& rng, const std::string& prefix, std::size_t d, std::size_t ffn) {
  add_linear(ps, rng, prefix + ".w1", prefix + ".b1", ffn, d);
  add_linear(ps, rng, prefix + ".w2", prefix + ".b2", d, ffn);
}

void add_embedding(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t vocab, std::size_t d) {
  ps.add(name, random_matrix(rng, vocab, d, 1.0 / std::sqrt(static_cast<double>(d))));
}

Var P(Tape& t, const ParameterSet& ps, const std::string& name) { return t.param(ps.at(name)); }

Var linear(Tape& t, Var x, const ParameterSet& ps, const std::string& w, const std::string& b) {
  return add_row(matmul_nt(x, P(t, ps, w)), P(t, ps, b));
}

Var norm(Tape& t, Var x, const ParameterSet& ps, const std::string& prefix) {
  return layer_norm(x, P(t, ps, prefix + ".g"), P(t, ps, prefix + ".b"));
}

/// Visibility of key k from query q; empty when everything is visible.
std::vector<unsigned char> attention_mask(std::size_t tq, std::size_t tk,
                                          std::span<const unsigned char> key_mask, bool causal) {
  bool all_visible = !causal || tq <= 1;
  if (!key_mask.empty())
    all_visible = all_visible && std::all_of(key_mask.begin(), key_mask.end(), [](unsigned char m) { return m != 0; });
  if (all_visible && !causal) return {};
  std::vector<unsigned char> mask(tq * tk, 1);
  for (std::size_t q = 0; q < tq; ++q)
    for (std::size_t k = 0; k < tk; ++k)
      mask[q * tk + k] = (key_mask.empty() || key_mask[k]) && (!causal || k <= q);
  return mask;
}

Var attention(Tape& t, Var xq, Var xkv, const ParameterSet& ps, const std::string& prefix,
              std::size_t heads, const std::vector<unsigned char>& mask) {
  const std::size_t d = xq.cols();
  const std::size_t dh = d / heads;
  Var q = linear(t, xq, ps, prefix + ".wq", prefix + ".bq");
  Var k = linear(t, xkv, ps, prefix + ".wk", prefix + ".bk");
  Var v = linear(t, xkv, ps, prefix + ".wv", prefix + ".bv");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Var probs = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), mask);
    outs.push_back(matmul(probs, vh));
  }
  Var merged = heads == 1 ? outs.front() : concat_cols(outs);
  return linear(t, merged, ps, prefix + ".wo", prefix + ".bo");
}

Var feed_forward(Tape& t, Var x, const ParameterSet& ps, const std::string& prefix) {
  return linear(t, gelu(linear(t, x, ps, prefix + ".w1", prefix + ".b1")), ps, prefix + ".w2", prefix + ".b2");
}

Var embed(Tape& t, const ParameterSet& ps, const std::string& table, std::span<const int> ids,
          const Matrix& positions, double dropout_rate) {
  const std::size_t d = positions.cols();
  if (ids.size() > positions.rows())
    throw ShapeError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_positions " +
                     std::to_string(positions.rows()));
  Matrix pe(ids.size(), d);
  std::copy_n(positions.data(), ids.size() * d, pe.data());
  Var x = scale(embedding(P(t, ps, table), ids), std::sqrt(static_cast<double>(d)));
  return dropout(add_constant(x, pe), dropout_rate);
}

void check_mask(std::span<const unsigned char> mask, std::size_t n, const char* what) {
  if (!mask.empty() && mask.size() != n)
    throw ShapeError(std::string(what) + " mask has " + std::to_string(mask.size()) + " entries for " +
                     std::to_string(n) + " positions");
}

std::string layer_name(const char* stack, std::size_t l) {
  return std::string(stack) + "layer" + std::to_string(l);
}

}  // namespace

// ------------------------------------------------------------------ heads

Var prediction_head(Tape&, Var h, Var W1, Var b1, Var W2) {
  return matmul_nt(tanh(add_row(matmul_nt(h, W1), b1)), W2);
}

Var label_head(Tape&, Var hidden, Var W3, Var b3, std::span<const unsigned char> mask) {
  return masked_max_rows(add_row(matmul_nt(hidden, W3), b3), mask);
}

// ------------------------------------------------------------------ Classifier

Classifier::Classifier(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  if (config_.classifier_vocab_size <= tok::kNumSpecials)
    throw ParameterError("classifier vocabulary must extend past the special tokens");
  init(seed);
}

Classifier::Classifier(const ModelConfig& config, const ParameterSet& params) : config_(config) {
  config_.validate();
  init(0);
  params_.copy_values_from(params);
}

void Classifier::init(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = config_.d;
  add_embedding(params_, rng, "embed", config_.classifier_vocab_size, d);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = layer_name("", l);
    add_norm(params_, p + ".ln1", d);
    add_attention(params_, rng, p + ".attn", d);
    add_norm(params_, p + ".ln2", d);
    add_ffn(params_, rng, p + ".ffn", d, config_.ffn_size);
  }
  add_norm(params_, "final_ln", d);
  add_linear(params_, rng, "head.W1", "head.b1", d, d);
  add_linear(params_, rng, "head.W2", "", config_.classifier_outputs(), d);
  positions_ = sinusoidal_positions(config_.max_positions, d);
}

Var Classifier::encode_first(Tape& t, std::span<const int> ids) const {
  if (ids.empty()) throw ShapeError("classifier input is empty");
  if (ids.front() != tok::kCls) throw ShapeError("classifier input must start with the CLS id");
  const double rate = config_.dropout;
  Var x = embed(t, params_, "embed", ids, positions_, rate);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = layer_name("", l);
    Var h = norm(t, x, params_, p + ".ln1");
    x = add(x, dropout(attention(t, h, h, params_, p + ".attn", config_.num_heads, {}), rate));
    x = add(x, dropout(feed_forward(t, norm(t, x, params_, p + ".ln2"), params_, p + ".ffn"), rate));
  }
  // Only position 0 is read, so normalize just that row.
  return norm(t, select_row(x, 0), params_, "final_ln");
}

Var Classifier::head(Tape& t, Var h) const {
  return nn::prediction_head(t, h, P(t, params_, "head.W1"), P(t, params_, "head.b1"), P(t, params_, "head.W2"));
}

PredictionHead Classifier::prediction_head() const {
  return {params_.at("head.W1").value, params_.at("head.b1").value, params_.at("head.W2").value};
}

// ------------------------------------------------------------------ Generator

Generator::Generator(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  if (config_.generator_vocab_size < tok::kNumSpecials)
    throw ParameterError("generator vocabulary must hold the special tokens");
  init(seed);
}

Generator::Generator(const ModelConfig& config, const ParameterSet& params) : config_(config) {
  config_.validate();
  init(0);
  params_.copy_values_from(params);
}

void Generator::init(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = config_.d;
  add_embedding(params_, rng, "enc.embed", config_.generator_vocab_size, d);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = layer_name("enc.", l);
    add_norm(params_, p + ".ln1", d);
    add_attention(params_, rng, p + ".attn", d);
    add_norm(params_, p + ".ln2", d);
    add_ffn(params_, rng, p + ".ffn", d, config_.ffn_size);
  }
  add_norm(params_, "enc.final_ln", d);
  add_embedding(params_, rng, "dec.embed", config_.generator_vocab_size, d);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = layer_name("dec.", l);
    add_norm(params_, p + ".ln1", d);
    add_attention(params_, rng, p + ".self", d);
    add_norm(params_, p + ".ln2", d);
    add_attention(params_, rng, p + ".cross", d);
    add_norm(params_, p + ".ln3", d);
    add_ffn(params_, rng, p + ".ffn", d, config_.ffn_size);
  }
  add_norm(params_, "dec.final_ln", d);
  add_linear(params_, rng, "proj.W", "proj.b2", config_.generator_vocab_size, d);
  add_linear(params_, rng, "label.W3", "label.b3", config_.K, d);
  positions_ = sinusoidal_positions(config_.max_positions, d);
}

Var Generator::encode(Tape& t, std::span<const int> src, std::span<const unsigned char> src_mask) const {
  if (src.empty()) throw ShapeError("generator source is empty");
  check_mask(src_mask, src.size(), "source");
  const double rate = config_.dropout;
  const auto mask = attention_mask(src.size(), src.size(), src_mask, false);
  Var x = embed(t, params_, "enc.embed", src, positions_, rate);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = layer_name("enc.", l);
    Var h = norm(t, x, params_, p + ".ln1");
    x = add(x, dropout(attention(t, h, h, params_, p + ".attn", config_.num_heads, mask), rate));
    x = add(x, dropout(feed_forward(t, norm(t, x, params_, p + ".ln2"), params_, p + ".ffn"), rate));
  }
  return norm(t, x, params_, "enc.final_ln");
}

Var Generator::decode(Tape& t, Var memory, std::span<const int> tgt_in, std::span<const unsigned char> src_mask,
                      std::span<const unsigned char> tgt_mask) const {
  if (tgt_in.empty()) throw ShapeError("decoder input is empty");
  check_mask(src_mask, memory.rows(), "source");
  check_mask(tgt_mask, tgt_in.size(), "target");
  const double rate = config_.dropout;
  const auto self_mask = attention_mask(tgt_in.size(), tgt_in.size(), tgt_mask, true);
  const auto cross_mask = attention_mask(tgt_in.size(), memory.rows(), src_mask, false);
  Var x = embed(t, params_, "dec.embed", tgt_in, positions_, rate);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = layer_name("dec.", l);
    Var h = norm(t, x, params_, p + ".ln1");
    x = add(x, dropout(attention(t, h, h, params_, p + ".self", config_.num_heads, self_mask), rate));
    Var c = norm(t, x, params_, p + ".ln2");
    x = add(x, dropout(attention(t, c, memory, params_, p + ".cross", config_.num_heads, cross_mask), rate));
    x = add(x, dropout(feed_forward(t, norm(t, x, params_, p + ".ln3"), params_, p + ".ffn"), rate));
  }
  return norm(t, x, params_, "dec.final_ln");
}

Var Generator::project(Tape& t, Var hidden) const { return linear(t, hidden, params_, "proj.W", "proj.b2"); }

GeneratorPass Generator::forward(Tape& t, std::span<const int> src, std::span<const int> tgt_in,
                                 std::span<const unsigned char> src_mask,
                                 std::span<const unsigned char> tgt_mask) const {
  Var memory = encode(t, src, src_mask);
  Var hidden = decode(t, memory, tgt_in, src_mask, tgt_mask);
  return {project(t, hidden), hidden};
}

Var Generator::label_logits(Tape& t, Var hidden, std::span<const unsigned char> tgt_mask) const {
  return nn::label_head(t, hidden, P(t, params_, "label.W3"), P(t, params_, "label.b3"), tgt_mask);
}

TokenProjection Generator::token_projection() const {
  return {params_.at("proj.W").value, params_.at("proj.b2").value};
}

GeneratorLabelHead Generator::label_head() const {
  return {params_.at("label.W3").value, params_.at("label.b3").value};
}

// ------------------------------------------------------------------ value API

Matrix classifier_encode(const Classifier& model, std::span<const int> ids) {
  Tape t = Tape::inference();
  return model.encode_first(t, ids).value();
}

double score_option(std::span<const double> h, const PredictionHead& head) {
  Tape t = Tape::inference();
  Var out = prediction_head(t, t.constant(Matrix::row_vector(h)), t.constant(head.W1), t.constant(head.b1),
                            t.constant(head.W2));
  if (out.value().size() != 1) throw ShapeError("score_option needs a single-output head");
  return out.scalar();
}

std::vector<double> option_distribution(std::span<const double> scores) {
  Matrix m = Matrix::row_vector(scores);
  kernels::softmax_rows(m);
  return m.storage();
}

GeneratorOutputs generator_forward(const Generator& model, std::span<const int> src, std::span<const int> tgt_in,
                                   std::span<const unsigned char> src_mask,
                                   std::span<const unsigned char> tgt_mask) {
  Tape t = Tape::inference();
  GeneratorPass pass = model.forward(t, src, tgt_in, src_mask, tgt_mask);
  return {pass.logits.value(), pass.hidden.value()};
}

Matrix generator_label_logits(const Matrix& hidden, const GeneratorLabelHead& head,
                              std::span<const unsigned char> mask) {
  Tape t = Tape::inference();
  return label_head(t, t.constant(hidden), t.constant(head.W3), t.constant(head.b3), mask).value();
}

}  // namespace pex::nn
