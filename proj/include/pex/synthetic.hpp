// SPDX-License-Identifier: Apache-2.0
//
// Copy-key multiple-choice benchmark. Each question embeds a key token; the
// correct option's evidence contains that key; the gold explanation names
// the key and the correct option.

#pragma once

#include <cstdint>
#include <vector>

#include "pex/corpus.hpp"

namespace pex::corpus {

struct CopyKeyConfig {
  std::size_t n_train = 2000;
  std::size_t n_dev = 200;
  std::size_t num_options = 4;
  /// Number of content tokens w0..w{vocab-1}.
  std::size_t vocab = 64;
  std::uint64_t seed = 7;
  std::size_t evidence_len = 3;
  /// Probability that the gold option's evidence actually carries the key.
  double evidence_decisive_rate = 1.0;
  /// When set, the gold option token is a fixed function of the key, shared
  /// by both splits, so the answer is learnable without evidence.
  bool keyed_answers = false;
  /// Attach "KEY goes with OPTION" as question context for the generator.
  bool with_context = true;
};

struct CopyKeySplits {
  std::vector<McqaSample> train;
  std::vector<McqaSample> dev;
};

CopyKeySplits make_copy_key_task(const CopyKeyConfig& config);

}  // namespace pex::corpus
