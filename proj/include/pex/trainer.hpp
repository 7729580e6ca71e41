// SPDX-License-Identifier: Apache-2.0
//
// Joint training of the classifier and the generator.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pex/checkpoint.hpp"
#include "pex/corpus.hpp"
#include "pex/netcore.hpp"
#include "pex/objective.hpp"
#include "pex/optim.hpp"
#include "pex/random.hpp"
#include "pex/tokenizer.hpp"

namespace pex::train {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t max_seq_len = 256;
  double warmup_proportion = 0.1;
  double grad_clip_norm = 1.0;
  double dropout = 0.1;
  double classifier_lr = 2e-5;
  double generator_lr = 1e-3;
  std::string classifier_optimizer = "adamw";
  std::string generator_optimizer = "adafactor";
  std::size_t batch_size = 4;
  std::size_t grad_accumulation_steps = 4;
  std::uint64_t seed = 42;
  objective::LossWeights weights;
  objective::Reduction reduction = objective::Reduction::Mean;
  bool detach_target = false;
  bool scale_by_tau_sq = false;
  corpus::ClassifierMode classifier_mode = corpus::ClassifierMode::QaOnly;
  std::size_t max_vocab_size = 30000;
  /// Architecture; vocab sizes, K, task, dropout and max_positions are filled in by fit.
  nn::ModelConfig model;

  /// Throws ConfigError listing every invalid field.
  void validate() const;
};

/// Per-dataset batch size: esnli 16, cose 4, cme 4 (anything else 4).
std::size_t default_batch_size(std::string_view dataset);

nlohmann::json to_json(const TrainConfig& config);
/// Unknown or ill-typed fields are collected and reported together.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Text-level batch: N*K classifier instances in sample-major order (N for
/// NLI) and N generator instances.
struct Batch {
  corpus::Task task = corpus::Task::Mcqa;
  std::size_t K = 0;
  std::vector<corpus::ClassifierInstance> classifier;
  std::vector<corpus::GeneratorInstance> generator;
  std::vector<int> answers;
};

/// BatchError on an empty batch, mixed K, or mixed task.
Batch make_batch(std::span<const corpus::Sample> samples, corpus::ClassifierMode mode,
                 corpus::CorpusScheme scheme);

struct EncodedSample {
  std::vector<std::vector<int>> classifier_inputs;  // K for MCQA, 1 for NLI
  int answer = 0;
  std::vector<int> source;  // ends with EOS
  std::vector<int> target;  // ends with EOS
  bool has_explanation = false;
};

struct Vocabs {
  tok::Vocab classifier;
  tok::Vocab generator;
};

Vocabs build_vocabs(std::span<const corpus::Sample> train, corpus::ClassifierMode mode, corpus::CorpusScheme scheme,
                    std::size_t max_size);
std::vector<EncodedSample> encode_batch(const Batch& batch, const Vocabs& vocabs, std::size_t max_len);

/// Task and option count shared by the samples; BatchError when they disagree.
std::pair<corpus::Task, std::size_t> task_shape(std::span<const corpus::Sample> samples);

struct StepStats {
  double classifier_lr = 0.0;
  double generator_lr = 0.0;
  double classifier_grad_norm = 0.0;
  double generator_grad_norm = 0.0;
};

/// Owns the optimizers and schedule for one classifier/generator pair.
class Trainer {
 public:
  Trainer(const TrainConfig& config, nn::Classifier& classifier, nn::Generator& generator,
          std::size_t total_steps);

  /// Forward and backward over one micro-batch; gradients accumulate.
  objective::LossReport accumulate(std::span<const EncodedSample> micro_batch, std::size_t micro_batches_in_step);
  /// Clips each component, applies one optimizer step each, zeroes gradients.
  StepStats step();
  /// accumulate() over every micro-batch followed by step().
  objective::LossReport train_step(std::span<const std::vector<EncodedSample>> micro_batches,
                                   StepStats* stats = nullptr);

  std::size_t steps_taken() const { return steps_; }
  bool uses_classifier() const;
  bool uses_generator() const;

 private:
  TrainConfig config_;
  nn::Classifier& classifier_;
  nn::Generator& generator_;
  std::size_t total_steps_;
  std::size_t warmup_steps_;
  std::size_t steps_ = 0;
  std::unique_ptr<optim::Optimizer> classifier_opt_;
  std::unique_ptr<optim::Optimizer> generator_opt_;
  Rng dropout_rng_;
};

/// Argmax of the classifier scores per sample (lowest index on ties).
std::vector<int> predict(const nn::Classifier& classifier, std::span<const EncodedSample> samples);
double evaluate_accuracy(const nn::Classifier& classifier, std::span<const EncodedSample> samples);

/// Keeps the best weights seen so far, optionally mirrored to disk.
class BestCheckpointTracker {
 public:
  explicit BestCheckpointTracker(std::optional<std::filesystem::path> dir = std::nullopt, std::ostream* log = nullptr)
      : dir_(std::move(dir)), log_(log) {}

  /// Returns true (and snapshots) when accuracy strictly improves.
  bool offer(double dev_accuracy, std::size_t epoch, std::size_t step, const nn::Classifier& classifier,
             const nn::Generator& generator, const Vocabs& vocabs,
             corpus::ClassifierMode mode = corpus::ClassifierMode::QaOnly,
             corpus::CorpusScheme scheme = corpus::CorpusScheme::Homogeneous);
  double best_accuracy() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  bool has_best() const { return checkpoint_ != nullptr; }
  nn::Checkpoint take();

 private:
  std::optional<std::filesystem::path> dir_;
  std::ostream* log_;
  double best_ = -1.0;
  std::size_t best_epoch_ = 0;
  std::unique_ptr<nn::Checkpoint> checkpoint_;
};

struct FitOptions {
  /// Best checkpoint is mirrored here on every improvement.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// JSON-lines metrics sink.
  std::ostream* metrics = nullptr;
  /// Human-readable progress and warnings.
  std::ostream* log = nullptr;
  /// Stop after the first evaluation at or above this accuracy.
  std::optional<double> target_accuracy;
};

struct FitResult {
  nn::Checkpoint best;
  double best_dev_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> dev_history;
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
};

FitResult fit(std::span<const corpus::Sample> train, std::span<const corpus::Sample> dev, const TrainConfig& config,
              const FitOptions& options = {});

/// Rebuilds the models stored in a checkpoint.
nn::Classifier classifier_from(const nn::Checkpoint& ckpt);
nn::Generator generator_from(const nn::Checkpoint& ckpt);

}  // namespace pex::train
