// SPDX-License-Identifier: Apache-2.0

#include "pex/evalsuite.hpp"

#include "pex/errors.hpp"
#include "pex/random.hpp"

namespace pex::eval {

double accuracy(std::span<const int> predictions, std::span<const int> golds) {
  if (predictions.size() != golds.size())
    throw EvalError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(golds.size()) + " golds");
  if (predictions.empty()) throw EvalError("accuracy over an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) correct += predictions[i] == golds[i];
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

double probe_accuracy(const nn::Checkpoint& probe,
                      std::span<const std::pair<corpus::McqaSample, std::string>> eval_samples) {
  if (eval_samples.empty()) throw EvalError("simulatability: no evaluation samples");
  const nn::Classifier classifier = train::classifier_from(probe);
  std::vector<train::EncodedSample> encoded(eval_samples.size());
  for (std::size_t i = 0; i < eval_samples.size(); ++i) {
    corpus::McqaSample s = eval_samples[i].first;
    s.explanation = eval_samples[i].second;
    for (const auto& inst : corpus::build_classifier_inputs(s, corpus::ClassifierMode::ProbeTest))
      encoded[i].classifier_inputs.push_back(
          tok::encode(inst.input_text, probe.classifier_vocab, probe.config.max_positions));
    encoded[i].answer = s.answer_index;
  }
  return train::evaluate_accuracy(classifier, encoded);
}

ProbeSet train_probes(std::span<const corpus::McqaSample> probe_train, const SimulatabilityOptions& options) {
  if (options.num_probes < 1) throw ParameterError("num_probes must be >= 1");
  for (const auto& s : probe_train)
    if (!s.evidence) throw EvalError("simulatability: probe training sample " + s.id + " has no evidence");

  std::vector<corpus::Sample> train, dev;
  if (options.probe_dev.empty()) {
    if (probe_train.size() < 2) throw EvalError("simulatability: need at least 2 probe training samples");
    const std::size_t held = std::max<std::size_t>(1, probe_train.size() / 10);
    train.assign(probe_train.begin(), probe_train.end() - static_cast<std::ptrdiff_t>(held));
    dev.assign(probe_train.end() - static_cast<std::ptrdiff_t>(held), probe_train.end());
  } else {
    train.assign(probe_train.begin(), probe_train.end());
    dev.assign(options.probe_dev.begin(), options.probe_dev.end());
  }

  train::TrainConfig cfg = options.probe_config;
  cfg.weights.ce = 1.0;
  cfg.weights.mle = cfg.weights.ce_g = cfg.weights.dis = 0.0;
  cfg.classifier_mode = corpus::ClassifierMode::QaEvidence;

  ProbeSet set;
  for (std::size_t p = 0; p < options.num_probes; ++p) {
    ProbeResult r;
    std::optional<nn::Checkpoint> model;
    for (int attempt = 0; attempt < 2; ++attempt) {
      r.seed = derive_seed(options.probe_config.seed, 100 + p + 1000 * static_cast<std::size_t>(attempt));
      r.retried = attempt > 0;
      cfg.seed = r.seed;
      try {
        train::FitOptions fo;
        fo.log = options.log;
        fo.target_accuracy = options.target_accuracy;
        model = train::fit(train, dev, cfg, fo).best;
        r.failed = false;
        break;
      } catch (const LossError& e) {
        r.failed = true;
        if (options.log) *options.log << "probe " << p << " diverged: " << e.what() << '\n';
      }
    }
    set.results.push_back(r);
    set.models.push_back(std::move(model));
  }
  return set;
}

SimulatabilityReport score_probes(const ProbeSet& probes,
                                  std::span<const std::pair<corpus::McqaSample, std::string>> eval_samples) {
  if (eval_samples.empty()) throw EvalError("simulatability: no evaluation samples");
  SimulatabilityReport report;
  double sum = 0.0;
  std::size_t ok = 0;
  for (std::size_t p = 0; p < probes.results.size(); ++p) {
    ProbeResult r = probes.results[p];
    if (!r.failed && probes.models[p]) {
      r.accuracy = probe_accuracy(*probes.models[p], eval_samples);
      sum += r.accuracy;
      ++ok;
    }
    report.probes.push_back(r);
  }
  if (ok == 0) throw EvalError("simulatability: every probe failed to train");
  report.accuracy_ye = sum / static_cast<double>(ok);
  return report;
}

SimulatabilityReport simulatability(std::span<const corpus::McqaSample> probe_train,
                                    std::span<const std::pair<corpus::McqaSample, std::string>> eval_samples,
                                    const SimulatabilityOptions& options) {
  if (eval_samples.empty()) throw EvalError("simulatability: no evaluation samples");
  return score_probes(train_probes(probe_train, options), eval_samples);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"num_samples", num_samples}};
  if (accuracy) {
    j["accuracy"] = *accuracy;
    j["num_correct"] = num_correct;
  }
  if (bleu) j["bleu"] = *bleu;
  if (simulatability) {
    j["accuracy_ye"] = simulatability->accuracy_ye;
    nlohmann::json probes = nlohmann::json::array();
    for (const ProbeResult& p : simulatability->probes)
      probes.push_back({{"seed", p.seed}, {"accuracy", p.accuracy}, {"failed", p.failed}, {"retried", p.retried}});
    j["probes"] = probes;
  }
  return j;
}

}  // namespace pex::eval
