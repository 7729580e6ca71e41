// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory layout:
//   checkpoint.json        format_version, model config, training metadata
//   classifier_vocab.txt   one token per line, specials first
//   generator_vocab.txt
//   classifier.bin         named tensors, exact doubles
//   generator.bin

#pragma once

#include <filesystem>
#include <limits>
#include <string>

#include <json.hpp>

#include "pex/autodiff.hpp"
#include "pex/netcore.hpp"
#include "pex/tokenizer.hpp"

namespace pex::nn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  tok::Vocab classifier_vocab;
  tok::Vocab generator_vocab;
  ParameterSet classifier;
  ParameterSet generator;
  corpus::ClassifierMode classifier_mode = corpus::ClassifierMode::QaOnly;
  corpus::CorpusScheme scheme = corpus::CorpusScheme::Homogeneous;
  /// Epoch that produced these weights; 0 is the initialization.
  std::size_t epoch = 0;
  std::size_t step = 0;
  double dev_accuracy = std::numeric_limits<double>::quiet_NaN();
};

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Writes to a sibling temporary directory, then swaps it into place.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

void write_parameters(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet read_parameters(const std::filesystem::path& path);

}  // namespace pex::nn
