// SPDX-License-Identifier: Apache-2.0

#include "pex/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pex/csv.hpp"
#include "pex/errors.hpp"
#include "pex/tokenizer.hpp"

namespace pex::corpus {

using nlohmann::json;

// ---------------------------------------------------------------- enums

std::string_view to_string(NliLabel label) {
  switch (label) {
    case NliLabel::Entailment: return "entailment";
    case NliLabel::Neutral: return "neutral";
    case NliLabel::Contradiction: return "contradiction";
  }
  return "";
}

NliLabel parse_nli_label(std::string_view text) {
  if (text == "entailment") return NliLabel::Entailment;
  if (text == "neutral") return NliLabel::Neutral;
  if (text == "contradiction") return NliLabel::Contradiction;
  throw SchemaError("unknown NLI label '" + std::string(text) + "'");
}

std::string_view to_string(ClassifierMode mode) {
  switch (mode) {
    case ClassifierMode::QaOnly: return "qa_only";
    case ClassifierMode::QaEvidence: return "qa_evidence";
    case ClassifierMode::QaExplanation: return "qa_explanation";
    case ClassifierMode::ProbeTest: return "probe_test";
  }
  return "";
}

ClassifierMode parse_classifier_mode(std::string_view text) {
  for (auto m : {ClassifierMode::QaOnly, ClassifierMode::QaEvidence, ClassifierMode::QaExplanation,
                 ClassifierMode::ProbeTest})
    if (to_string(m) == text) return m;
  throw ConfigError("unknown classifier mode '" + std::string(text) + "'");
}

std::string_view to_string(Task task) { return task == Task::Mcqa ? "mcqa" : "nli"; }

Task parse_task(std::string_view text) {
  if (text == "mcqa") return Task::Mcqa;
  if (text == "nli") return Task::Nli;
  throw ConfigError("unknown task '" + std::string(text) + "'");
}

void McqaSample::validate() const {
  if (options.empty()) throw SchemaError("sample " + id + ": no options");
  if (answer_index < 0 || static_cast<std::size_t>(answer_index) >= options.size())
    throw SchemaError("sample " + id + ": answer_index " + std::to_string(answer_index) +
                      " out of range for " + std::to_string(options.size()) + " options");
  if (evidence && !evidence->empty() && evidence->size() != options.size())
    throw SchemaError("sample " + id + ": " + std::to_string(evidence->size()) +
                      " evidence passages for " + std::to_string(options.size()) + " options");
}

// ------------------------------------------------------------------ templates

namespace {

std::string join(std::initializer_list<std::string_view> parts) {
  std::string out;
  for (std::string_view p : parts) {
    if (!out.empty()) out.push_back(' ');
    out += p;
  }
  return out;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

const std::string& require_explanation(const McqaSample& s, const char* what) {
  if (!s.explanation) throw FormatError(std::string(what) + " requires an explanation (sample " + s.id + ")");
  return *s.explanation;
}

std::string mcqa_source(const McqaSample& s) {
  std::string src = s.question + " The options are " + join(s.options, " ");
  if (s.question_context) src += " reference: " + *s.question_context;
  return src;
}

}  // namespace

std::vector<ClassifierInstance> build_classifier_inputs(const McqaSample& sample, ClassifierMode mode,
                                                        const Symbols& sym) {
  sample.validate();
  if (mode == ClassifierMode::QaEvidence &&
      (!sample.evidence || sample.evidence->size() != sample.options.size()))
    throw FormatError("qa_evidence requires one evidence passage per option (sample " + sample.id + ")");
  std::vector<ClassifierInstance> out;
  out.reserve(sample.options.size());
  for (std::size_t j = 0; j < sample.options.size(); ++j) {
    const std::string& opt = sample.options[j];
    std::string text;
    switch (mode) {
      case ClassifierMode::QaOnly:
        text = join({sym.cls, sample.question, sym.sep, opt, sym.eos});
        break;
      case ClassifierMode::QaEvidence:
        text = join({sym.cls, sample.question, opt, sym.sep, (*sample.evidence)[j], sym.eos});
        break;
      case ClassifierMode::QaExplanation:
        text = join({sym.cls, sample.question, opt, sym.sep, require_explanation(sample, "qa_explanation"),
                     sym.eos});
        break;
      case ClassifierMode::ProbeTest:
        text = join({sym.cls, opt, sym.sep, require_explanation(sample, "probe_test"), sym.eos});
        break;
    }
    out.push_back({static_cast<int>(j), std::move(text), j == static_cast<std::size_t>(sample.answer_index) ? 1 : 0});
  }
  return out;
}

std::vector<ClassifierInstance> build_classifier_inputs(const NliSample& sample, ClassifierMode,
                                                        const Symbols& sym) {
  return {{0, join({sym.cls, sample.premise, sym.sep, sample.hypothesis, sym.eos}),
           static_cast<int>(sample.label)}};
}

std::vector<ClassifierInstance> build_classifier_inputs(const Sample& sample, ClassifierMode mode,
                                                        const Symbols& symbols) {
  return std::visit([&](const auto& s) { return build_classifier_inputs(s, mode, symbols); }, sample);
}

GeneratorInstance build_generator_instance(const McqaSample& sample, Supervision supervision,
                                           CorpusScheme scheme) {
  sample.validate();
  const std::string source = mcqa_source(sample);
  const std::string answer = std::string(kAnswerLead) + sample.gold_option();
  if (supervision == Supervision::Unexplained) return {source, answer, false};
  const std::string& expl = require_explanation(sample, "explained supervision");
  if (scheme == CorpusScheme::Homogeneous)
    return {source, std::string(kExplanationLead) + expl, true};
  return {"explanation " + source, answer + ". " + std::string(kExplanationLead) + expl, true};
}

GeneratorInstance build_generator_instance(const NliSample& sample, Supervision supervision,
                                           CorpusScheme scheme) {
  const std::string source = "nli " + sample.premise + " " + sample.hypothesis;
  const std::string answer = std::string(kAnswerLead) + std::string(to_string(sample.label));
  if (supervision == Supervision::Unexplained) return {source, answer, false};
  if (sample.explanations.empty())
    throw FormatError("explained supervision requires an explanation (sample " + sample.id + ")");
  const std::string& expl = sample.explanations.front();
  if (scheme == CorpusScheme::Homogeneous)
    return {source, std::string(kExplanationLead) + expl, true};
  return {"explanation " + source, answer + ". " + std::string(kExplanationLead) + expl, true};
}

GeneratorInstance build_generator_instance(const Sample& sample, Supervision supervision,
                                           CorpusScheme scheme) {
  return std::visit([&](const auto& s) { return build_generator_instance(s, supervision, scheme); }, sample);
}

std::string generator_source(const Sample& sample, CorpusScheme scheme) {
  const std::string plain = build_generator_instance(sample, Supervision::Unexplained, scheme).source_text;
  return scheme == CorpusScheme::Mixed ? "explanation " + plain : plain;
}

Supervision supervision_of(const Sample& sample) {
  if (const auto* m = std::get_if<McqaSample>(&sample))
    return m->explanation ? Supervision::Explained : Supervision::Unexplained;
  return std::get<NliSample>(sample).explanations.empty() ? Supervision::Unexplained
                                                          : Supervision::Explained;
}

CorpusScheme scheme_of(std::span<const Sample> samples) {
  for (const Sample& s : samples)
    if (supervision_of(s) == Supervision::Unexplained) return CorpusScheme::Mixed;
  return CorpusScheme::Homogeneous;
}

std::string strip_explanation_template(std::string_view generated) {
  const auto pos = generated.find(kExplanationLead);
  if (pos == std::string_view::npos) return std::string(generated);
  return std::string(generated.substr(pos + kExplanationLead.size()));
}

// ------------------------------------------------------------------ retrieval

std::string retrieve_question_context(std::string_view question, std::span<const std::string> passages,
                                      std::size_t top_k) {
  if (passages.empty()) throw RetrievalError("question context retrieval over an empty corpus");
  if (top_k < 1) throw ParameterError("top_k must be >= 1");
  const auto qt = tok::split_whitespace(question);
  const std::set<std::string> qset(qt.begin(), qt.end());
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    const auto pt = tok::split_whitespace(passages[i]);
    const std::set<std::string> pset(pt.begin(), pt.end());
    std::size_t overlap = 0;
    for (const auto& t : pset) overlap += qset.count(t);
    const double score = pset.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(pset.size());
    scored.emplace_back(score, i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::string out;
  for (std::size_t k = 0; k < std::min(top_k, scored.size()); ++k) {
    if (!out.empty()) out.push_back(' ');
    out += passages[scored[k].second];
  }
  return out;
}

// ------------------------------------------------------------------ JSONL I/O

namespace {

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (tok::normalize_whitespace(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    if (!j.is_object())
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": expected a JSON object");
    try {
      fn(j, lineno);
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string id_of(const json& j) {
  const json& v = j.at("id");
  return v.is_string() ? v.get<std::string>() : v.dump();
}

McqaSample mcqa_from_json(const json& j) {
  McqaSample s;
  s.id = id_of(j);
  s.question = j.at("question").get<std::string>();
  s.options = j.at("options").get<std::vector<std::string>>();
  s.answer_index = j.at("answer_index").get<int>();
  if (j.contains("evidence") && !j["evidence"].is_null())
    s.evidence = j["evidence"].get<std::vector<std::string>>();
  if (j.contains("question_context") && !j["question_context"].is_null())
    s.question_context = j["question_context"].get<std::string>();
  if (j.contains("explanation") && !j["explanation"].is_null())
    s.explanation = j["explanation"].get<std::string>();
  return s;
}

json to_json(const McqaSample& s) {
  json j = json::object();
  j["id"] = s.id;
  j["question"] = s.question;
  j["options"] = s.options;
  j["answer_index"] = s.answer_index;
  if (s.evidence) j["evidence"] = *s.evidence;
  if (s.question_context) j["question_context"] = *s.question_context;
  if (s.explanation) j["explanation"] = *s.explanation;
  return j;
}

NliSample nli_from_json(const json& j) {
  NliSample s;
  s.id = id_of(j);
  s.premise = j.at("premise").get<std::string>();
  s.hypothesis = j.at("hypothesis").get<std::string>();
  s.label = parse_nli_label(j.at("label").get<std::string>());
  if (j.contains("explanations")) s.explanations = j["explanations"].get<std::vector<std::string>>();
  return s;
}

json to_json(const NliSample& s) {
  json j = json::object();
  j["id"] = s.id;
  j["premise"] = s.premise;
  j["hypothesis"] = s.hypothesis;
  j["label"] = std::string(to_string(s.label));
  j["explanations"] = s.explanations;
  return j;
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  for (const T& s : samples) out << to_json(s).dump() << '\n';
}

}  // namespace

std::vector<McqaSample> load_cme_jsonl(const std::filesystem::path& path) {
  std::vector<McqaSample> out;
  for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
    McqaSample s = mcqa_from_json(j);
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      s.validate();
    } catch (const SchemaError& e) {
      throw SchemaError(where + e.what());
    }
    if (!out.empty() && s.options.size() != out.front().options.size())
      throw SchemaError(where + "inconsistent option count " + std::to_string(s.options.size()) +
                        " (file started with " + std::to_string(out.front().options.size()) + ")");
    out.push_back(std::move(s));
  });
  return out;
}

void write_mcqa_jsonl(const std::filesystem::path& path, std::span<const McqaSample> samples) {
  write_jsonl(path, samples);
}

std::vector<NliSample> load_nli_jsonl(const std::filesystem::path& path) {
  std::vector<NliSample> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(nli_from_json(j)); });
  return out;
}

void write_nli_jsonl(const std::filesystem::path& path, std::span<const NliSample> samples) {
  write_jsonl(path, samples);
}

std::vector<Sample> load_samples_jsonl(const std::filesystem::path& path) {
  std::vector<Sample> out;
  for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
    if (j.contains("premise")) {
      out.emplace_back(nli_from_json(j));
    } else {
      McqaSample s = mcqa_from_json(j);
      try {
        s.validate();
      } catch (const SchemaError& e) {
        throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      out.emplace_back(std::move(s));
    }
  });
  return out;
}

// ------------------------------------------------------------------ e-SNLI

namespace {

char delimiter_for(const std::filesystem::path& path) {
  return path.extension() == ".tsv" ? '\t' : ',';
}

std::map<std::string, std::size_t> header_index(const std::vector<std::string>& header) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < header.size(); ++i) idx[tok::normalize_whitespace(header[i])] = i;
  return idx;
}

std::size_t require_column(const std::map<std::string, std::size_t>& idx, const std::string& name,
                           const std::filesystem::path& path) {
  auto it = idx.find(name);
  if (it == idx.end()) throw IngestionError(path.string() + ": missing column '" + name + "'");
  return it->second;
}

}  // namespace

std::vector<NliSample> read_esnli_file(const std::filesystem::path& path) {
  const auto rows = io::read_csv(path, delimiter_for(path));
  if (rows.empty()) throw IngestionError(path.string() + ": empty file (no header)");
  const auto idx = header_index(rows.front());
  const std::size_t c_id = require_column(idx, "pairID", path);
  const std::size_t c_label = require_column(idx, "gold_label", path);
  const std::size_t c_p = require_column(idx, "Sentence1", path);
  const std::size_t c_h = require_column(idx, "Sentence2", path);
  const std::size_t c_e1 = require_column(idx, "Explanation_1", path);
  std::vector<std::size_t> expl_cols = {c_e1};
  for (const char* extra : {"Explanation_2", "Explanation_3"})
    if (auto it = idx.find(extra); it != idx.end()) expl_cols.push_back(it->second);

  std::vector<NliSample> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](std::size_t c) -> const std::string& {
      if (c >= row.size())
        throw IngestionError(path.string() + ": row " + std::to_string(r + 1) + " has " +
                             std::to_string(row.size()) + " fields");
      return row[c];
    };
    NliSample s;
    s.id = cell(c_id);
    try {
      s.label = parse_nli_label(tok::normalize_whitespace(cell(c_label)));
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ": row " + std::to_string(r + 1) + ": " + e.what());
    }
    s.premise = cell(c_p);
    s.hypothesis = cell(c_h);
    for (std::size_t c : expl_cols)
      if (c < row.size() && !tok::normalize_whitespace(row[c]).empty()) s.explanations.push_back(row[c]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<NliSample> filter_esnli_train(std::span<const NliSample> train) {
  std::vector<NliSample> kept;
  kept.reserve(train.size());
  for (const NliSample& s : train) {
    bool leaks = false;
    if (!s.explanations.empty()) {
      const std::string e = tok::normalize_whitespace(s.explanations.front());
      const std::string p = tok::normalize_whitespace(s.premise);
      const std::string h = tok::normalize_whitespace(s.hypothesis);
      leaks = (!p.empty() && e.find(p) != std::string::npos) ||
              (!h.empty() && e.find(h) != std::string::npos);
    }
    if (!leaks) kept.push_back(s);
  }
  return kept;
}

EsnliSplits load_esnli(std::span<const std::filesystem::path> train_paths,
                       const std::filesystem::path& dev_path, const std::filesystem::path& test_path) {
  EsnliSplits splits;
  std::vector<NliSample> raw;
  for (const auto& p : train_paths) {
    auto part = read_esnli_file(p);
    raw.insert(raw.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  splits.raw_train_count = raw.size();
  splits.train = filter_esnli_train(raw);
  splits.dev = read_esnli_file(dev_path);
  splits.test = read_esnli_file(test_path);
  return splits;
}

// ------------------------------------------------------------------ CoS-E

CoseVersion parse_cose_version(std::string_view text) {
  if (text == "v1.0" || text == "1.0") return CoseVersion::V1_0;
  if (text == "v1.11" || text == "1.11") return CoseVersion::V1_11;
  throw ConfigError("unknown CoS-E version '" + std::string(text) + "'");
}

std::size_t cose_option_count(CoseVersion version) { return version == CoseVersion::V1_0 ? 3 : 5; }

namespace {

McqaSample cose_from_json(const json& j) {
  McqaSample s;
  s.id = id_of(j);
  if (j.at("question").is_object()) {
    // CommonsenseQA record merged with the CoS-E explanation.
    const json& q = j["question"];
    s.question = q.at("stem").get<std::string>();
    const std::string key = j.at("answerKey").get<std::string>();
    s.answer_index = -1;
    for (const json& c : q.at("choices")) {
      if (c.at("label").get<std::string>() == key) s.answer_index = static_cast<int>(s.options.size());
      s.options.push_back(c.at("text").get<std::string>());
    }
    if (j.contains("explanation")) {
      const json& e = j["explanation"];
      if (e.is_object() && e.contains("open-ended")) s.explanation = e["open-ended"].get<std::string>();
      else if (e.is_string()) s.explanation = e.get<std::string>();
    }
  } else {
    s.question = j["question"].get<std::string>();
    s.options = j.at("choices").get<std::vector<std::string>>();
    const json& ans = j.at("answer");
    if (ans.is_number_integer()) {
      s.answer_index = ans.get<int>();
    } else {
      const std::string a = ans.get<std::string>();
      auto it = std::find(s.options.begin(), s.options.end(), a);
      s.answer_index = it == s.options.end() ? -1 : static_cast<int>(it - s.options.begin());
    }
    for (const char* key : {"abstractive_explanation", "explanation"})
      if (j.contains(key) && j[key].is_string()) {
        s.explanation = j[key].get<std::string>();
        break;
      }
  }
  return s;
}

std::vector<McqaSample> load_cose_csv(const std::filesystem::path& path) {
  const auto rows = io::read_csv(path, delimiter_for(path));
  if (rows.empty()) throw IngestionError(path.string() + ": empty file (no header)");
  const auto idx = header_index(rows.front());
  const std::size_t c_id = require_column(idx, "id", path);
  const std::size_t c_q = require_column(idx, "question", path);
  const std::size_t c_label = require_column(idx, "label", path);
  const std::size_t c_e = require_column(idx, "human_expl_open-ended", path);
  std::vector<std::size_t> choice_cols;
  for (std::size_t k = 0;; ++k) {
    auto it = idx.find("choice_" + std::to_string(k));
    if (it == idx.end()) break;
    choice_cols.push_back(it->second);
  }
  if (choice_cols.empty()) throw IngestionError(path.string() + ": missing column 'choice_0'");
  std::vector<McqaSample> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t need = std::max({c_id, c_q, c_label, c_e, *std::max_element(choice_cols.begin(), choice_cols.end())});
    if (row.size() <= need)
      throw IngestionError(path.string() + ": row " + std::to_string(r + 1) + " is short");
    McqaSample s;
    s.id = row[c_id];
    s.question = row[c_q];
    for (std::size_t c : choice_cols) s.options.push_back(row[c]);
    try {
      s.answer_index = std::stoi(row[c_label]);
    } catch (const std::exception&) {
      throw SchemaError(path.string() + ": row " + std::to_string(r + 1) + ": bad label '" + row[c_label] + "'");
    }
    s.explanation = row[c_e];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<McqaSample> load_cose(const std::filesystem::path& path, CoseVersion version) {
  std::vector<McqaSample> out;
  if (path.extension() == ".csv" || path.extension() == ".tsv") {
    out = load_cose_csv(path);
  } else {
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(cose_from_json(j)); });
  }
  const std::size_t k = cose_option_count(version);
  for (const McqaSample& s : out) {
    if (s.options.size() != k)
      throw SchemaError(path.string() + ": sample " + s.id + " has " + std::to_string(s.options.size()) +
                        " options; CoS-E " + (version == CoseVersion::V1_0 ? "v1.0" : "v1.11") +
                        " expects " + std::to_string(k));
    s.validate();
  }
  return out;
}

// ------------------------------------------------------------------ stats

namespace {

double words(std::string_view text) { return static_cast<double>(tok::split_whitespace(text).size()); }

}  // namespace

SplitStats compute_stats(std::string_view split, std::span<const McqaSample> samples) {
  SplitStats st;
  st.split = std::string(split);
  st.count = samples.size();
  if (samples.empty()) return st;
  double q = 0, o = 0, e = 0;
  std::size_t n_opts = 0, n_expl = 0;
  for (const McqaSample& s : samples) {
    q += words(s.question);
    for (const auto& opt : s.options) o += words(opt);
    n_opts += s.options.size();
    if (s.explanation) {
      e += words(*s.explanation);
      ++n_expl;
    }
  }
  st.avg_question_words = q / static_cast<double>(samples.size());
  st.avg_option_words = n_opts ? o / static_cast<double>(n_opts) : 0.0;
  st.avg_explanation_words = n_expl ? e / static_cast<double>(n_expl) : 0.0;
  st.options_per_problem = samples.front().options.size();
  return st;
}

SplitStats compute_stats(std::string_view split, std::span<const NliSample> samples) {
  SplitStats st;
  st.split = std::string(split);
  st.count = samples.size();
  st.options_per_problem = kNliClasses;
  if (samples.empty()) return st;
  double p = 0, h = 0, e = 0;
  std::size_t n_expl = 0;
  for (const NliSample& s : samples) {
    p += words(s.premise);
    h += words(s.hypothesis);
    for (const auto& x : s.explanations) {
      e += words(x);
      ++n_expl;
    }
  }
  st.avg_question_words = p / static_cast<double>(samples.size());
  st.avg_option_words = h / static_cast<double>(samples.size());
  st.avg_explanation_words = n_expl ? e / static_cast<double>(n_expl) : 0.0;
  return st;
}

}  // namespace pex::corpus
