// SPDX-License-Identifier: Apache-2.0

#include "pex/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pex/errors.hpp"
#include "pex/kernels.hpp"
#include "pex/random.hpp"

namespace pex::train {

using nlohmann::json;
using objective::LossReport;

namespace {

enum Stream : std::uint64_t { kDataOrder = 0, kClassifierInit = 1, kGeneratorInit = 2, kDropout = 3 };

std::string_view reduction_name(objective::Reduction r) {
  return r == objective::Reduction::Mean ? "mean" : "sum";
}

}  // namespace

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  std::vector<std::string> errors;
  if (max_seq_len < 8) errors.push_back("max_seq_len must be >= 8");
  if (!(warmup_proportion >= 0.0 && warmup_proportion <= 1.0)) errors.push_back("warmup_proportion must lie in [0, 1]");
  if (!(grad_clip_norm > 0.0)) errors.push_back("grad_clip_norm must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) errors.push_back("dropout must lie in [0, 1)");
  if (!(classifier_lr > 0.0)) errors.push_back("classifier_lr must be > 0");
  if (!(generator_lr > 0.0)) errors.push_back("generator_lr must be > 0");
  for (const auto& [field, name] : {std::pair{"classifier_optimizer", &classifier_optimizer},
                                    std::pair{"generator_optimizer", &generator_optimizer}})
    if (*name != "adamw" && *name != "adafactor")
      errors.push_back(std::string(field) + " must be adamw or adafactor, got '" + *name + "'");
  if (batch_size < 1) errors.push_back("batch_size must be >= 1");
  if (grad_accumulation_steps < 1) errors.push_back("grad_accumulation_steps must be >= 1");
  if (max_vocab_size < 6) errors.push_back("max_vocab_size must be >= 6");
  try {
    weights.validate();
  } catch (const Error& e) {
    errors.push_back(std::string("loss_weights: ") + e.what());
  }
  if (model.d == 0 || model.num_heads == 0 || model.d % model.num_heads != 0)
    errors.push_back("model.d must be a positive multiple of model.num_heads");
  if (model.num_layers == 0) errors.push_back("model.num_layers must be >= 1");
  if (model.ffn_size == 0) errors.push_back("model.ffn_size must be >= 1");
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

std::size_t default_batch_size(std::string_view dataset) { return dataset == "esnli" ? 16 : 4; }

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"max_seq_len", c.max_seq_len},
              {"warmup_proportion", c.warmup_proportion},
              {"grad_clip_norm", c.grad_clip_norm},
              {"dropout", c.dropout},
              {"classifier_lr", c.classifier_lr},
              {"generator_lr", c.generator_lr},
              {"classifier_optimizer", c.classifier_optimizer},
              {"generator_optimizer", c.generator_optimizer},
              {"batch_size", c.batch_size},
              {"grad_accumulation_steps", c.grad_accumulation_steps},
              {"seed", c.seed},
              {"loss_weights",
               {{"ce", c.weights.ce}, {"mle", c.weights.mle}, {"ce_g", c.weights.ce_g}, {"dis", c.weights.dis},
                {"tau", c.weights.tau}}},
              {"reduction", reduction_name(c.reduction)},
              {"detach_target", c.detach_target},
              {"scale_by_tau_sq", c.scale_by_tau_sq},
              {"classifier_mode", corpus::to_string(c.classifier_mode)},
              {"max_vocab_size", c.max_vocab_size},
              {"model",
               {{"d", c.model.d},
                {"num_layers", c.model.num_layers},
                {"num_heads", c.model.num_heads},
                {"ffn_size", c.model.ffn_size}}}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  std::vector<std::string> errors;
  auto read = [&](const json& obj, const std::string& prefix, const std::string& key, auto& out) {
    try {
      out = obj.at(key).get<std::remove_reference_t<decltype(out)>>();
    } catch (const json::exception&) {
      errors.push_back(prefix + key + ": wrong type");
    }
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") read(j, "", key, c.epochs);
    else if (key == "max_seq_len") read(j, "", key, c.max_seq_len);
    else if (key == "warmup_proportion") read(j, "", key, c.warmup_proportion);
    else if (key == "grad_clip_norm") read(j, "", key, c.grad_clip_norm);
    else if (key == "dropout") read(j, "", key, c.dropout);
    else if (key == "classifier_lr") read(j, "", key, c.classifier_lr);
    else if (key == "generator_lr") read(j, "", key, c.generator_lr);
    else if (key == "classifier_optimizer") read(j, "", key, c.classifier_optimizer);
    else if (key == "generator_optimizer") read(j, "", key, c.generator_optimizer);
    else if (key == "batch_size") read(j, "", key, c.batch_size);
    else if (key == "grad_accumulation_steps") read(j, "", key, c.grad_accumulation_steps);
    else if (key == "seed") read(j, "", key, c.seed);
    else if (key == "detach_target") read(j, "", key, c.detach_target);
    else if (key == "scale_by_tau_sq") read(j, "", key, c.scale_by_tau_sq);
    else if (key == "max_vocab_size") read(j, "", key, c.max_vocab_size);
    else if (key == "reduction") {
      std::string r;
      read(j, "", key, r);
      if (r == "mean") c.reduction = objective::Reduction::Mean;
      else if (r == "sum") c.reduction = objective::Reduction::Sum;
      else errors.push_back("reduction: expected mean or sum");
    } else if (key == "classifier_mode") {
      std::string m;
      read(j, "", key, m);
      try {
        c.classifier_mode = corpus::parse_classifier_mode(m);
      } catch (const Error& e) {
        errors.push_back(std::string("classifier_mode: ") + e.what());
      }
    } else if (key == "loss_weights") {
      if (!value.is_object()) {
        errors.push_back("loss_weights: expected an object");
        continue;
      }
      for (const auto& [wk, wv] : value.items()) {
        if (wk == "ce") read(value, "loss_weights.", wk, c.weights.ce);
        else if (wk == "mle") read(value, "loss_weights.", wk, c.weights.mle);
        else if (wk == "ce_g") read(value, "loss_weights.", wk, c.weights.ce_g);
        else if (wk == "dis") read(value, "loss_weights.", wk, c.weights.dis);
        else if (wk == "tau") read(value, "loss_weights.", wk, c.weights.tau);
        else errors.push_back("loss_weights." + wk + ": unknown field");
      }
    } else if (key == "model") {
      if (!value.is_object()) {
        errors.push_back("model: expected an object");
        continue;
      }
      for (const auto& [mk, mv] : value.items()) {
        if (mk == "d") read(value, "model.", mk, c.model.d);
        else if (mk == "num_layers") read(value, "model.", mk, c.model.num_layers);
        else if (mk == "num_heads") read(value, "model.", mk, c.model.num_heads);
        else if (mk == "ffn_size") read(value, "model.", mk, c.model.ffn_size);
        else errors.push_back("model." + mk + ": unknown field");
      }
    } else {
      errors.push_back(key + ": unknown field");
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

// ------------------------------------------------------------------ batching

std::pair<corpus::Task, std::size_t> task_shape(std::span<const corpus::Sample> samples) {
  if (samples.empty()) throw BatchError("empty batch");
  auto shape_of = [](const corpus::Sample& s) -> std::pair<corpus::Task, std::size_t> {
    if (const auto* m = std::get_if<corpus::McqaSample>(&s)) return {corpus::Task::Mcqa, m->num_options()};
    return {corpus::Task::Nli, corpus::kNliClasses};
  };
  const auto first = shape_of(samples.front());
  for (const corpus::Sample& s : samples) {
    const auto shape = shape_of(s);
    if (shape.first != first.first) throw BatchError("batch mixes MCQA and NLI samples");
    if (shape.second != first.second)
      throw BatchError("batch mixes option counts " + std::to_string(first.second) + " and " +
                       std::to_string(shape.second));
  }
  return first;
}

Batch make_batch(std::span<const corpus::Sample> samples, corpus::ClassifierMode mode, corpus::CorpusScheme scheme) {
  Batch b;
  std::tie(b.task, b.K) = task_shape(samples);
  for (const corpus::Sample& s : samples) {
    for (auto& inst : corpus::build_classifier_inputs(s, mode)) b.classifier.push_back(std::move(inst));
    b.generator.push_back(corpus::build_generator_instance(s, corpus::supervision_of(s), scheme));
    if (const auto* m = std::get_if<corpus::McqaSample>(&s)) b.answers.push_back(m->answer_index);
    else b.answers.push_back(static_cast<int>(std::get<corpus::NliSample>(s).label));
  }
  return b;
}

Vocabs build_vocabs(std::span<const corpus::Sample> train, corpus::ClassifierMode mode, corpus::CorpusScheme scheme,
                    std::size_t max_size) {
  const Batch b = make_batch(train, mode, scheme);
  std::vector<std::string> ctexts, gtexts;
  ctexts.reserve(b.classifier.size());
  for (const auto& c : b.classifier) ctexts.push_back(c.input_text);
  for (const auto& g : b.generator) {
    gtexts.push_back(g.source_text);
    gtexts.push_back(g.target_text);
  }
  return {tok::build_vocab(ctexts, max_size), tok::build_vocab(gtexts, max_size)};
}

std::vector<EncodedSample> encode_batch(const Batch& batch, const Vocabs& vocabs, std::size_t max_len) {
  const std::size_t per = batch.task == corpus::Task::Mcqa ? batch.K : 1;
  const std::size_t n = batch.answers.size();
  if (batch.classifier.size() != n * per || (!batch.generator.empty() && batch.generator.size() != n))
    throw BatchError("batch parts disagree in size");
  std::vector<EncodedSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    EncodedSample& e = out[i];
    e.answer = batch.answers[i];
    for (std::size_t k = 0; k < per; ++k)
      e.classifier_inputs.push_back(tok::encode(batch.classifier[i * per + k].input_text, vocabs.classifier, max_len));
    if (!batch.generator.empty()) {
      const auto& g = batch.generator[i];
      e.source = tok::encode(g.source_text + " [EOS]", vocabs.generator, max_len);
      e.target = tok::encode(g.target_text + " [EOS]", vocabs.generator, max_len);
      e.has_explanation = g.has_explanation;
    }
  }
  return out;
}

namespace {

/// Classifier side only; samples need no explanation.
std::vector<EncodedSample> encode_for_classifier(std::span<const corpus::Sample> samples, const tok::Vocab& vocab,
                                                 corpus::ClassifierMode mode, std::size_t max_len) {
  task_shape(samples);
  std::vector<EncodedSample> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const auto& inst : corpus::build_classifier_inputs(samples[i], mode))
      out[i].classifier_inputs.push_back(tok::encode(inst.input_text, vocab, max_len));
    if (const auto* m = std::get_if<corpus::McqaSample>(&samples[i])) out[i].answer = m->answer_index;
    else out[i].answer = static_cast<int>(std::get<corpus::NliSample>(samples[i]).label);
  }
  return out;
}

/// 1 x K scores for one sample.
nn::Var sample_scores(nn::Tape& t, const nn::Classifier& c, const EncodedSample& s) {
  if (c.config().task == corpus::Task::Nli) return c.scores(t, s.classifier_inputs.front());
  std::vector<nn::Var> cols;
  cols.reserve(s.classifier_inputs.size());
  for (const auto& ids : s.classifier_inputs) cols.push_back(c.scores(t, ids));
  return nn::concat_cols(cols);
}

}  // namespace

// ------------------------------------------------------------------ Trainer

Trainer::Trainer(const TrainConfig& config, nn::Classifier& classifier, nn::Generator& generator,
                 std::size_t total_steps)
    : config_(config),
      classifier_(classifier),
      generator_(generator),
      total_steps_(total_steps),
      warmup_steps_(static_cast<std::size_t>(config.warmup_proportion * static_cast<double>(total_steps))),
      classifier_opt_(optim::make_optimizer(config.classifier_optimizer)),
      generator_opt_(optim::make_optimizer(config.generator_optimizer)),
      dropout_rng_(derive_seed(config.seed, kDropout)) {
  config_.validate();
}

bool Trainer::uses_classifier() const { return config_.weights.ce != 0.0 || config_.weights.dis != 0.0; }

bool Trainer::uses_generator() const {
  const auto& w = config_.weights;
  return w.mle != 0.0 || w.ce_g != 0.0 || (w.dis != 0.0 && !config_.detach_target);
}

LossReport Trainer::accumulate(std::span<const EncodedSample> micro, std::size_t micro_batches_in_step) {
  if (micro.empty()) throw BatchError("empty micro-batch");
  const auto& w = config_.weights;
  const bool need_p = w.ce != 0.0 || w.dis != 0.0;
  const bool need_g = w.ce_g != 0.0 || w.dis != 0.0;
  const bool need_gen = w.mle != 0.0 || need_g;

  nn::Tape tape(true, &dropout_rng_);
  std::vector<nn::Var> p_rows, g_rows, logit_blocks;
  std::vector<int> answers, targets;
  for (const EncodedSample& s : micro) {
    answers.push_back(s.answer);
    if (need_p) p_rows.push_back(sample_scores(tape, classifier_, s));
    if (need_gen) {
      if (s.source.empty() || s.target.empty()) throw BatchError("sample has no generator side");
      nn::GeneratorPass pass = generator_.forward(tape, s.source, nn::shift_right(s.target));
      if (w.mle != 0.0) {
        logit_blocks.push_back(pass.logits);
        targets.insert(targets.end(), s.target.begin(), s.target.end());
      }
      if (need_g) g_rows.push_back(generator_.label_logits(tape, pass.hidden));
    }
  }

  LossReport r;
  r.sample_count = micro.size();
  r.token_count = targets.size();
  std::vector<nn::Var> terms;
  std::vector<double> weights;
  nn::Var P, G;
  if (need_p) P = p_rows.size() == 1 ? p_rows.front() : nn::concat_rows(p_rows);
  if (need_g) G = g_rows.size() == 1 ? g_rows.front() : nn::concat_rows(g_rows);
  if (w.ce != 0.0) {
    nn::Var v = objective::classification_loss(P, answers, config_.reduction);
    r.ce = v.scalar();
    terms.push_back(v);
    weights.push_back(w.ce);
  }
  if (w.mle != 0.0) {
    nn::Var L = logit_blocks.size() == 1 ? logit_blocks.front() : nn::concat_rows(logit_blocks);
    nn::Var v = objective::mle_loss(L, targets, {}, config_.reduction);
    r.mle = v.scalar();
    terms.push_back(v);
    weights.push_back(w.mle);
  }
  if (w.ce_g != 0.0) {
    nn::Var v = objective::classification_loss(G, answers, config_.reduction);
    r.ce_g = v.scalar();
    terms.push_back(v);
    weights.push_back(w.ce_g);
  }
  if (w.dis != 0.0) {
    objective::DistillOptions opts;
    opts.tau = w.tau;
    opts.detach_target = config_.detach_target;
    opts.scale_by_tau_sq = config_.scale_by_tau_sq;
    opts.reduction = config_.reduction;
    nn::Var v = objective::distillation_loss(P, G, opts);
    r.dis = v.scalar();
    terms.push_back(v);
    weights.push_back(w.dis);
  }
  if (terms.empty()) throw ConfigError("every loss weight is zero");
  r.total = objective::total_loss(r, w);
  if (!std::isfinite(r.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at optimizer step " << steps_ << ": ce=" << r.ce << " mle=" << r.mle
        << " ce_g=" << r.ce_g << " dis=" << r.dis;
    throw LossError(msg.str());
  }
  nn::Var total = nn::weighted_sum(terms, weights);
  const double scale =
      config_.reduction == objective::Reduction::Mean ? 1.0 / static_cast<double>(micro_batches_in_step) : 1.0;
  tape.backward(total, scale);
  return r;
}

StepStats Trainer::step() {
  StepStats s;
  const double mult = optim::linear_schedule(steps_, warmup_steps_, total_steps_);
  if (uses_classifier()) {
    s.classifier_grad_norm = optim::clip_grad_norm(classifier_.params(), config_.grad_clip_norm);
    s.classifier_lr = config_.classifier_lr * mult;
    classifier_opt_->step(classifier_.params(), s.classifier_lr);
  }
  if (uses_generator()) {
    s.generator_grad_norm = optim::clip_grad_norm(generator_.params(), config_.grad_clip_norm);
    s.generator_lr = config_.generator_lr * mult;
    generator_opt_->step(generator_.params(), s.generator_lr);
  }
  classifier_.params().zero_grad();
  generator_.params().zero_grad();
  ++steps_;
  return s;
}

LossReport Trainer::train_step(std::span<const std::vector<EncodedSample>> micro_batches, StepStats* stats) {
  if (micro_batches.empty()) throw BatchError("train_step needs at least one micro-batch");
  LossReport sum;
  for (const auto& mb : micro_batches) {
    const LossReport r = accumulate(mb, micro_batches.size());
    sum.ce += r.ce;
    sum.mle += r.mle;
    sum.ce_g += r.ce_g;
    sum.dis += r.dis;
    sum.total += r.total;
    sum.token_count += r.token_count;
    sum.sample_count += r.sample_count;
  }
  const double n = static_cast<double>(micro_batches.size());
  sum.ce /= n;
  sum.mle /= n;
  sum.ce_g /= n;
  sum.dis /= n;
  sum.total /= n;
  const StepStats s = step();
  if (stats) *stats = s;
  return sum;
}

// ------------------------------------------------------------------ evaluation

std::vector<int> predict(const nn::Classifier& classifier, std::span<const EncodedSample> samples) {
  std::vector<int> out(samples.size());
  kernels::parallel_for(samples.size(), [&](std::size_t i) {
    nn::Tape t = nn::Tape::inference();
    const Matrix& scores = sample_scores(t, classifier, samples[i]).value();
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k)
      if (scores.data()[k] > scores.data()[best]) best = k;
    out[i] = static_cast<int>(best);
  });
  return out;
}

double evaluate_accuracy(const nn::Classifier& classifier, std::span<const EncodedSample> samples) {
  if (samples.empty()) throw EvalError("accuracy over an empty set");
  const std::vector<int> pred = predict(classifier, samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += pred[i] == samples[i].answer;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// ------------------------------------------------------------------ selection

bool BestCheckpointTracker::offer(double dev_accuracy, std::size_t epoch, std::size_t step,
                                  const nn::Classifier& classifier, const nn::Generator& generator,
                                  const Vocabs& vocabs, corpus::ClassifierMode mode, corpus::CorpusScheme scheme) {
  if (checkpoint_ && !(dev_accuracy > best_)) return false;
  auto ckpt = std::make_unique<nn::Checkpoint>();
  ckpt->config = classifier.config();
  ckpt->classifier_vocab = vocabs.classifier;
  ckpt->generator_vocab = vocabs.generator;
  ckpt->classifier = classifier.params().clone();
  ckpt->generator = generator.params().clone();
  ckpt->epoch = epoch;
  ckpt->step = step;
  ckpt->dev_accuracy = dev_accuracy;
  ckpt->classifier_mode = mode;
  ckpt->scheme = scheme;
  if (dir_) {
    try {
      nn::save_checkpoint(*dir_, *ckpt);
    } catch (const CheckpointError& e) {
      if (log_) *log_ << "warning: checkpoint not saved: " << e.what() << '\n';
    }
  }
  checkpoint_ = std::move(ckpt);
  best_ = dev_accuracy;
  best_epoch_ = epoch;
  return true;
}

nn::Checkpoint BestCheckpointTracker::take() {
  if (!checkpoint_) throw EvalError("no checkpoint has been recorded");
  nn::Checkpoint out = std::move(*checkpoint_);
  checkpoint_.reset();
  return out;
}

nn::Classifier classifier_from(const nn::Checkpoint& ckpt) { return nn::Classifier(ckpt.config, ckpt.classifier); }
nn::Generator generator_from(const nn::Checkpoint& ckpt) { return nn::Generator(ckpt.config, ckpt.generator); }

// ------------------------------------------------------------------ fit

FitResult fit(std::span<const corpus::Sample> train, std::span<const corpus::Sample> dev, const TrainConfig& config,
              const FitOptions& options) {
  config.validate();
  if (train.empty()) throw BatchError("training set is empty");
  if (dev.empty()) throw BatchError("dev set is empty");
  const auto [task, K] = task_shape(train);
  if (task_shape(dev) != std::pair{task, K}) throw BatchError("train and dev sets differ in task or option count");

  const bool needs_generator = config.weights.mle != 0.0 || config.weights.ce_g != 0.0 || config.weights.dis != 0.0;
  const corpus::CorpusScheme scheme = corpus::scheme_of(train);
  Vocabs vocabs;
  std::vector<EncodedSample> train_enc;
  if (needs_generator) {
    vocabs = build_vocabs(train, config.classifier_mode, scheme, config.max_vocab_size);
    train_enc = encode_batch(make_batch(train, config.classifier_mode, scheme), vocabs, config.max_seq_len);
  } else {
    std::vector<std::string> texts;
    for (const corpus::Sample& s : train)
      for (const auto& inst : corpus::build_classifier_inputs(s, config.classifier_mode))
        texts.push_back(inst.input_text);
    vocabs.classifier = tok::build_vocab(texts, config.max_vocab_size);
    vocabs.generator = tok::Vocab();
    train_enc = encode_for_classifier(train, vocabs.classifier, config.classifier_mode, config.max_seq_len);
  }
  const std::vector<EncodedSample> dev_enc =
      encode_for_classifier(dev, vocabs.classifier, config.classifier_mode, config.max_seq_len);

  nn::ModelConfig mc = config.model;
  mc.classifier_vocab_size = vocabs.classifier.size();
  mc.generator_vocab_size = std::max<std::size_t>(vocabs.generator.size(), tok::kNumSpecials);
  mc.K = K;
  mc.task = task;
  mc.dropout = config.dropout;
  mc.max_positions = config.max_seq_len;
  nn::Classifier classifier(mc, derive_seed(config.seed, kClassifierInit));
  nn::Generator generator(mc, derive_seed(config.seed, kGeneratorInit));

  const std::size_t micro_per_epoch = (train_enc.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t steps_per_epoch =
      (micro_per_epoch + config.grad_accumulation_steps - 1) / config.grad_accumulation_steps;
  Trainer trainer(config, classifier, generator, steps_per_epoch * config.epochs);
  Rng data_rng(derive_seed(config.seed, kDataOrder));
  BestCheckpointTracker tracker(options.checkpoint_dir, options.log);
  FitResult result;

  auto evaluate = [&](std::size_t epoch) {
    const double acc = evaluate_accuracy(classifier, dev_enc);
    const bool improved = tracker.offer(acc, epoch, trainer.steps_taken(), classifier, generator, vocabs,
                                        config.classifier_mode, scheme);
    result.dev_history.push_back(acc);
    if (options.metrics)
      *options.metrics << json{{"type", "eval"},
                               {"epoch", epoch},
                               {"step", trainer.steps_taken()},
                               {"dev_accuracy", acc},
                               {"best_dev_accuracy", tracker.best_accuracy()},
                               {"improved", improved}}
                              .dump()
                       << '\n';
    if (options.log)
      *options.log << "epoch " << epoch << ": dev accuracy " << acc << (improved ? " (best)" : "") << '\n';
    return acc;
  };

  if (config.epochs == 0) evaluate(0);
  std::vector<std::size_t> order(train_enc.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, data_rng);
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::vector<std::vector<EncodedSample>> micro;
      for (std::size_t m = 0; m < config.grad_accumulation_steps && pos < order.size(); ++m) {
        std::vector<EncodedSample> mb;
        for (std::size_t b = 0; b < config.batch_size && pos < order.size(); ++b) mb.push_back(train_enc[order[pos++]]);
        micro.push_back(std::move(mb));
      }
      StepStats stats;
      const LossReport r = trainer.train_step(micro, &stats);
      if (options.metrics)
        *options.metrics << json{{"type", "step"},
                                 {"epoch", epoch},
                                 {"step", trainer.steps_taken()},
                                 {"ce", r.ce},
                                 {"mle", r.mle},
                                 {"ce_g", r.ce_g},
                                 {"dis", r.dis},
                                 {"total", r.total},
                                 {"lr_classifier", stats.classifier_lr},
                                 {"lr_generator", stats.generator_lr},
                                 {"grad_norm_classifier", stats.classifier_grad_norm},
                                 {"grad_norm_generator", stats.generator_grad_norm}}
                                .dump()
                         << '\n';
    }
    result.epochs_run = epoch;
    const double acc = evaluate(epoch);
    if (options.target_accuracy && acc >= *options.target_accuracy) break;
  }

  result.best_dev_accuracy = tracker.best_accuracy();
  result.best_epoch = tracker.best_epoch();
  result.steps = trainer.steps_taken();
  result.best = tracker.take();
  return result;
}

}  // namespace pex::train
