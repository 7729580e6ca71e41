// SPDX-License-Identifier: Apache-2.0
//
// Dataset records, file ingestion for CME-style JSONL, e-SNLI and CoS-E,
// and the exact text templates fed to the classifier and the generator.
// The rendered strings are documented byte-for-byte in docs/FORMATS.md.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pex::corpus {

struct McqaSample {
  std::string id;
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
  /// One passage per option when present.
  std::optional<std::vector<std::string>> evidence;
  std::optional<std::string> question_context;
  std::optional<std::string> explanation;

  std::size_t num_options() const { return options.size(); }
  const std::string& gold_option() const { return options.at(static_cast<std::size_t>(answer_index)); }
  /// Throws SchemaError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const McqaSample&, const McqaSample&) = default;
};

enum class NliLabel { Entailment = 0, Neutral = 1, Contradiction = 2 };
inline constexpr std::size_t kNliClasses = 3;

std::string_view to_string(NliLabel label);
/// Throws SchemaError for anything but the three label names.
NliLabel parse_nli_label(std::string_view text);

struct NliSample {
  std::string id;
  std::string premise;
  std::string hypothesis;
  NliLabel label = NliLabel::Entailment;
  std::vector<std::string> explanations;

  /// The explanations used as BLEU references (the first two).
  std::span<const std::string> references() const {
    return {explanations.data(), std::min<std::size_t>(explanations.size(), 2)};
  }

  friend bool operator==(const NliSample&, const NliSample&) = default;
};

using Sample = std::variant<McqaSample, NliSample>;

struct ClassifierInstance {
  int option_index = 0;
  std::string input_text;
  int label = 0;

  friend bool operator==(const ClassifierInstance&, const ClassifierInstance&) = default;
};

struct GeneratorInstance {
  std::string source_text;
  std::string target_text;
  bool has_explanation = false;

  friend bool operator==(const GeneratorInstance&, const GeneratorInstance&) = default;
};

enum class ClassifierMode { QaOnly, QaEvidence, QaExplanation, ProbeTest };
enum class Supervision { Explained, Unexplained };
/// Homogeneous: every training sample carries an explanation. Mixed: only
/// some do, and the generator templates switch accordingly.
enum class CorpusScheme { Homogeneous, Mixed };
enum class Task { Mcqa, Nli };

std::string_view to_string(ClassifierMode mode);
ClassifierMode parse_classifier_mode(std::string_view text);
std::string_view to_string(Task task);
Task parse_task(std::string_view text);

/// Segmentation symbols; overridable for models with other conventions.
struct Symbols {
  std::string cls = "[CLS]";
  std::string sep = "[SEP]";
  std::string eos = "[EOS]";
};

inline constexpr std::string_view kExplanationLead = "My commonsense tells me that ";
inline constexpr std::string_view kAnswerLead = "The answer is ";

/// K instances for MCQA (one per option, in option order); one for NLI.
/// probe_test pairs sample.explanation with every option.
std::vector<ClassifierInstance> build_classifier_inputs(const McqaSample& sample, ClassifierMode mode,
                                                        const Symbols& symbols = {});
std::vector<ClassifierInstance> build_classifier_inputs(const NliSample& sample, ClassifierMode mode,
                                                        const Symbols& symbols = {});
std::vector<ClassifierInstance> build_classifier_inputs(const Sample& sample, ClassifierMode mode,
                                                        const Symbols& symbols = {});

GeneratorInstance build_generator_instance(const McqaSample& sample, Supervision supervision,
                                           CorpusScheme scheme = CorpusScheme::Homogeneous);
GeneratorInstance build_generator_instance(const NliSample& sample, Supervision supervision,
                                           CorpusScheme scheme = CorpusScheme::Homogeneous);
GeneratorInstance build_generator_instance(const Sample& sample, Supervision supervision,
                                           CorpusScheme scheme = CorpusScheme::Homogeneous);

/// Source that asks the generator for an explanation at inference time;
/// needs no gold explanation.
std::string generator_source(const Sample& sample, CorpusScheme scheme);

/// Explained when the sample carries explanation text.
Supervision supervision_of(const Sample& sample);
/// Mixed as soon as one sample lacks an explanation.
CorpusScheme scheme_of(std::span<const Sample> samples);

/// Text after the explanation lead when present, otherwise the input unchanged.
std::string strip_explanation_template(std::string_view generated);

/// Concatenation of the top_k passages by |tok(q) & tok(p)| / |tok(p)|,
/// ties by corpus order.
std::string retrieve_question_context(std::string_view question,
                                      std::span<const std::string> passages, std::size_t top_k);

// ------------------------------------------------------------------ ingestion

std::vector<McqaSample> load_cme_jsonl(const std::filesystem::path& path);
void write_mcqa_jsonl(const std::filesystem::path& path, std::span<const McqaSample> samples);

std::vector<NliSample> load_nli_jsonl(const std::filesystem::path& path);
void write_nli_jsonl(const std::filesystem::path& path, std::span<const NliSample> samples);

/// Normalized JSONL of either family; the task is detected from the keys.
std::vector<Sample> load_samples_jsonl(const std::filesystem::path& path);

struct EsnliSplits {
  std::vector<NliSample> train;
  std::vector<NliSample> dev;
  std::vector<NliSample> test;
  std::size_t raw_train_count = 0;
};

/// Reads one e-SNLI CSV (or TSV by extension) in the public column layout.
std::vector<NliSample> read_esnli_file(const std::filesystem::path& path);
/// Drops rows whose first explanation contains the whole premise or the
/// whole hypothesis (whitespace-normalized, case-sensitive).
std::vector<NliSample> filter_esnli_train(std::span<const NliSample> train);
/// `train_paths` may list several shards (the public release splits train in two).
EsnliSplits load_esnli(std::span<const std::filesystem::path> train_paths,
                       const std::filesystem::path& dev_path, const std::filesystem::path& test_path);

enum class CoseVersion { V1_0, V1_11 };
CoseVersion parse_cose_version(std::string_view text);
std::size_t cose_option_count(CoseVersion version);
/// Accepts the merged CommonsenseQA+CoS-E JSONL, the flat JSONL layout,
/// or the processed CSV layout (id,question,choice_0..,label,human_expl_open-ended).
std::vector<McqaSample> load_cose(const std::filesystem::path& path, CoseVersion version);

struct SplitStats {
  std::string split;
  std::size_t count = 0;
  double avg_question_words = 0.0;
  double avg_option_words = 0.0;
  double avg_explanation_words = 0.0;
  std::size_t options_per_problem = 0;
};

SplitStats compute_stats(std::string_view split, std::span<const McqaSample> samples);
SplitStats compute_stats(std::string_view split, std::span<const NliSample> samples);

}  // namespace pex::corpus
