// SPDX-License-Identifier: Apache-2.0
//
// Label accuracy, corpus BLEU and the simulatability score accuracy_ye:
// the accuracy of probe classifiers that see only an option and an
// explanation, never the question.

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pex/corpus.hpp"
#include "pex/trainer.hpp"

namespace pex::eval {

/// Fraction of exact matches; EvalError on empty or mismatched input.
double accuracy(std::span<const int> predictions, std::span<const int> golds);

/// Corpus BLEU in [0, 100] over whitespace tokens: clipped n-gram precision
/// up to max_order, geometric mean, brevity penalty against the closest
/// reference length (shorter wins ties). Orders above 1 with no match use
/// (0 + 1) / (total + 1); no unigram match gives 0.
double corpus_bleu(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references,
                   std::size_t max_order = 4);

struct ProbeResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  bool failed = false;
  bool retried = false;
};

struct SimulatabilityReport {
  double accuracy_ye = 0.0;
  std::vector<ProbeResult> probes;
};

struct SimulatabilityOptions {
  std::size_t num_probes = 3;
  /// Probe training setup; loss weights and classifier mode are overridden
  /// to classifier-only on qa_evidence.
  train::TrainConfig probe_config;
  /// Probe model selection set; when empty the last tenth of probe_train is held out.
  std::vector<corpus::McqaSample> probe_dev;
  /// Stop each probe once its dev accuracy reaches this.
  std::optional<double> target_accuracy;
  std::ostream* log = nullptr;
};

/// Trains num_probes classifiers on the question/option/evidence view and
/// scores each on the option/explanation view of `eval_samples`. Probes
/// whose training diverges are retried once with a new seed and otherwise
/// left out of the mean; EvalError if every probe fails.
SimulatabilityReport simulatability(std::span<const corpus::McqaSample> probe_train,
                                    std::span<const std::pair<corpus::McqaSample, std::string>> eval_samples,
                                    const SimulatabilityOptions& options);

struct ProbeSet {
  std::vector<ProbeResult> results;
  /// Aligned with results; empty for probes that failed twice.
  std::vector<std::optional<nn::Checkpoint>> models;
};

/// The training half of simulatability(); probes can then be scored on
/// several explanation sets.
ProbeSet train_probes(std::span<const corpus::McqaSample> probe_train, const SimulatabilityOptions& options);
SimulatabilityReport score_probes(const ProbeSet& probes,
                                  std::span<const std::pair<corpus::McqaSample, std::string>> eval_samples);

/// Accuracy of a trained probe on option/explanation inputs.
double probe_accuracy(const nn::Checkpoint& probe,
                      std::span<const std::pair<corpus::McqaSample, std::string>> eval_samples);

struct EvalReport {
  std::optional<double> accuracy;
  std::optional<double> bleu;
  std::optional<SimulatabilityReport> simulatability;
  std::size_t num_samples = 0;
  std::size_t num_correct = 0;

  nlohmann::json to_json() const;
};

}  // namespace pex::eval
