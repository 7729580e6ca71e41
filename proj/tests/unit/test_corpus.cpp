#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pex/corpus.hpp"
#include "pex/csv.hpp"
#include "pex/errors.hpp"
#include "pex/synthetic.hpp"
#include "pex/tokenizer.hpp"

using namespace pex;
using namespace pex::corpus;
namespace fs = std::filesystem;

namespace {

McqaSample two_option() {
  McqaSample s;
  s.id = "q1";
  s.question = "Q";
  s.options = {"A", "B"};
  s.answer_index = 1;
  s.evidence = std::vector<std::string>{"ea", "eb"};
  s.question_context = "ctx";
  s.explanation = "ex";
  return s;
}

std::vector<std::string> texts(const std::vector<ClassifierInstance>& xs) {
  std::vector<std::string> out;
  for (const auto& x : xs) out.push_back(x.input_text);
  return out;
}

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("pex_corpus_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

std::string golden(const std::string& name) {
  std::ifstream in(fs::path(PEX_GOLDEN_DIR) / (name + ".txt"), std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("classifier templates") {
  const McqaSample s = two_option();
  CHECK(texts(build_classifier_inputs(s, ClassifierMode::QaEvidence)) ==
        std::vector<std::string>{"[CLS] Q A [SEP] ea [EOS]", "[CLS] Q B [SEP] eb [EOS]"});
  CHECK(texts(build_classifier_inputs(s, ClassifierMode::ProbeTest)) ==
        std::vector<std::string>{"[CLS] A [SEP] ex [EOS]", "[CLS] B [SEP] ex [EOS]"});
  const auto inst = build_classifier_inputs(s, ClassifierMode::QaOnly);
  CHECK(inst[0].label == 0);
  CHECK(inst[1].label == 1);
  CHECK(inst[1].option_index == 1);

  McqaSample no_ev = s;
  no_ev.evidence = std::vector<std::string>{};
  CHECK_THROWS_AS(build_classifier_inputs(no_ev, ClassifierMode::QaEvidence), FormatError);
  McqaSample no_ex = s;
  no_ex.explanation.reset();
  CHECK_THROWS_AS(build_classifier_inputs(no_ex, ClassifierMode::QaExplanation), FormatError);
  CHECK_THROWS_AS(build_classifier_inputs(no_ex, ClassifierMode::ProbeTest), FormatError);
}

TEST_CASE("custom segmentation symbols") {
  Symbols sym{"<s>", "</s>", "<e>"};
  CHECK(build_classifier_inputs(two_option(), ClassifierMode::QaOnly, sym)[0].input_text == "<s> Q </s> A <e>");
}

TEST_CASE("generator templates") {
  McqaSample s = two_option();
  s.question_context.reset();
  CHECK(build_generator_instance(s, Supervision::Explained).target_text == "My commonsense tells me that ex");
  const auto un = build_generator_instance(s, Supervision::Unexplained, CorpusScheme::Mixed);
  CHECK(un.target_text == "The answer is B");
  CHECK(un.source_text == "Q The options are A B");
  CHECK_FALSE(un.has_explanation);

  NliSample n{"n1", "p", "h", NliLabel::Neutral, {"e1"}};
  CHECK(build_generator_instance(n, Supervision::Explained).source_text == "nli p h");

  McqaSample bare = two_option();
  bare.explanation.reset();
  CHECK_THROWS_AS(build_generator_instance(bare, Supervision::Explained), FormatError);
}

TEST_CASE("template outputs match the golden files") {
  const McqaSample s = two_option();
  McqaSample no_ctx = s;
  no_ctx.question_context.reset();
  const NliSample n{"n1", "p", "h", NliLabel::Contradiction, {"e1", "e2", "e3"}};
  auto lines = [](const std::vector<ClassifierInstance>& xs) {
    std::string out;
    for (const auto& x : xs) out += x.input_text + "\n";
    return out;
  };
  auto pair = [](const GeneratorInstance& g) { return g.source_text + "\n" + g.target_text + "\n"; };
  CHECK(lines(build_classifier_inputs(s, ClassifierMode::QaOnly)) == golden("mcqa_classifier_qa_only"));
  CHECK(lines(build_classifier_inputs(s, ClassifierMode::QaEvidence)) == golden("mcqa_classifier_qa_evidence"));
  CHECK(lines(build_classifier_inputs(s, ClassifierMode::QaExplanation)) ==
        golden("mcqa_classifier_qa_explanation"));
  CHECK(lines(build_classifier_inputs(s, ClassifierMode::ProbeTest)) == golden("mcqa_classifier_probe_test"));
  CHECK(lines(build_classifier_inputs(n, ClassifierMode::QaOnly)) == golden("nli_classifier"));
  CHECK(pair(build_generator_instance(s, Supervision::Explained)) == golden("mcqa_generator_explained_homogeneous"));
  CHECK(pair(build_generator_instance(no_ctx, Supervision::Explained)) ==
        golden("mcqa_generator_explained_homogeneous_no_context"));
  CHECK(pair(build_generator_instance(s, Supervision::Unexplained, CorpusScheme::Mixed)) ==
        golden("mcqa_generator_unexplained_mixed"));
  CHECK(pair(build_generator_instance(s, Supervision::Explained, CorpusScheme::Mixed)) ==
        golden("mcqa_generator_explained_mixed"));
  CHECK(pair(build_generator_instance(n, Supervision::Explained)) == golden("nli_generator_explained_homogeneous"));
  CHECK(pair(build_generator_instance(n, Supervision::Unexplained, CorpusScheme::Mixed)) ==
        golden("nli_generator_unexplained_mixed"));
  CHECK(pair(build_generator_instance(n, Supervision::Explained, CorpusScheme::Mixed)) ==
        golden("nli_generator_explained_mixed"));
}

TEST_CASE("permuting options permutes classifier instances") {
  McqaSample s;
  s.id = "p";
  s.question = "which";
  s.options = {"x", "y", "z"};
  s.answer_index = 2;
  s.evidence = std::vector<std::string>{"ex", "ey", "ez"};
  McqaSample t = s;
  t.options = {"z", "x", "y"};
  t.evidence = std::vector<std::string>{"ez", "ex", "ey"};
  t.answer_index = 0;
  for (auto mode : {ClassifierMode::QaOnly, ClassifierMode::QaEvidence}) {
    const auto a = build_classifier_inputs(s, mode), b = build_classifier_inputs(t, mode);
    REQUIRE(a.size() == 3);
    CHECK(b[0].input_text == a[2].input_text);
    CHECK(b[1].input_text == a[0].input_text);
    CHECK(b[0].label == 1);
  }
}

TEST_CASE("scheme detection, generator source and template stripping") {
  McqaSample a = two_option(), b = two_option();
  b.explanation.reset();
  std::vector<Sample> homo = {a, a}, mixed = {a, b};
  CHECK(scheme_of(homo) == CorpusScheme::Homogeneous);
  CHECK(scheme_of(mixed) == CorpusScheme::Mixed);
  CHECK(generator_source(Sample(b), CorpusScheme::Mixed) == "explanation Q The options are A B reference: ctx");
  CHECK(generator_source(Sample(b), CorpusScheme::Homogeneous) == "Q The options are A B reference: ctx");
  CHECK(strip_explanation_template("My commonsense tells me that x y") == "x y");
  CHECK(strip_explanation_template("The answer is B. My commonsense tells me that x") == "x");
  CHECK(strip_explanation_template("no lead here") == "no lead here");
}

TEST_CASE("NLI labels and references") {
  CHECK(parse_nli_label("neutral") == NliLabel::Neutral);
  CHECK_THROWS_AS(parse_nli_label("maybe"), SchemaError);
  NliSample n{"n", "p", "h", NliLabel::Entailment, {"a", "b", "c"}};
  CHECK(n.references().size() == 2);
  CHECK(n.references()[1] == "b");
}

TEST_CASE("CME JSONL round trip and errors") {
  const fs::path p = write_temp("cme.jsonl",
                                "{\"id\":\"1\",\"question\":\"q\",\"options\":[\"a\",\"b\",\"c\",\"d\",\"e\"],"
                                "\"answer_index\":4,\"explanation\":\"because\"}\n\n");
  const auto xs = load_cme_jsonl(p);
  REQUIRE(xs.size() == 1);
  CHECK(xs[0].num_options() == 5);
  CHECK(xs[0].answer_index == 4);
  CHECK(*xs[0].explanation == "because");

  const fs::path out = fs::temp_directory_path() / "pex_corpus_cme_out.jsonl";
  write_mcqa_jsonl(out, xs);
  CHECK(load_cme_jsonl(out) == xs);
  CHECK(load_cme_jsonl(write_temp("empty.jsonl", "")).empty());

  CHECK_THROWS_AS(load_cme_jsonl(write_temp("bad.jsonl", "{not json\n")), IngestionError);
  CHECK_THROWS_AS(load_cme_jsonl(write_temp("range.jsonl",
                                            "{\"id\":\"1\",\"question\":\"q\",\"options\":[\"a\"],\"answer_index\":3}\n")),
                  SchemaError);
  CHECK_THROWS_AS(load_cme_jsonl(write_temp("missing.jsonl", "{\"id\":\"1\",\"options\":[\"a\"]}\n")), SchemaError);
}

TEST_CASE("normalized JSONL detects the task per record") {
  const fs::path p = write_temp("mixed.jsonl",
                                "{\"id\":\"n\",\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"entailment\","
                                "\"explanations\":[\"e\"]}\n"
                                "{\"id\":\"m\",\"question\":\"q\",\"options\":[\"a\",\"b\"],\"answer_index\":0}\n");
  const auto xs = load_samples_jsonl(p);
  REQUIRE(xs.size() == 2);
  CHECK(std::holds_alternative<NliSample>(xs[0]));
  CHECK(std::holds_alternative<McqaSample>(xs[1]));
}

TEST_CASE("CSV parser") {
  const auto rows = io::parse_csv("\xEF\xBB\xBF" "a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n\"multi\nline\",z\r\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "a");
  CHECK(rows[1][0] == "x, y");
  CHECK(rows[1][1] == "he said \"hi\"");
  CHECK(rows[2][0] == "multi\nline");
  CHECK(rows[2][1] == "z");
  const auto tsv = io::parse_csv("a\tb\n1\t2\n", '\t');
  CHECK(tsv[1][1] == "2");
}

TEST_CASE("e-SNLI reading and the leakage filter") {
  const std::string header = "pairID,gold_label,Sentence1,Sentence2,Explanation_1,Explanation_2,Explanation_3\n";
  const fs::path train = write_temp("esnli_train.csv", header +
                                                           "1,entailment,A man sleeps.,A person rests.,Sleeping is resting.,,\n"
                                                           "2,neutral,A dog runs.,It is fast.,P. A dog runs.,,\n"
                                                           "3,contradiction,Cats sit.,Cats fly.,x Cats fly. y,,\n");
  const fs::path dev = write_temp("esnli_dev.csv", header + "4,neutral,p,h,one,two,three\n");
  const fs::path test = write_temp("esnli_test.csv", header + "5,entailment,p,h,one,two,\n");
  const std::vector<fs::path> trains = {train};
  const EsnliSplits s = load_esnli(trains, dev, test);
  CHECK(s.raw_train_count == 3);
  REQUIRE(s.train.size() == 1);
  CHECK(s.train[0].id == "1");
  REQUIRE(s.dev.size() == 1);
  CHECK(s.dev[0].explanations.size() == 3);
  CHECK(s.dev[0].references().size() == 2);
  CHECK(s.test[0].explanations.size() == 2);

  CHECK_THROWS_AS(read_esnli_file(write_temp("esnli_nocol.csv", "pairID,gold_label\n1,neutral\n")), IngestionError);
  CHECK_THROWS_AS(read_esnli_file(write_temp("esnli_badlabel.csv", header + "1,maybe,p,h,e,,\n")), SchemaError);
}

TEST_CASE("CoS-E layouts") {
  const fs::path merged = write_temp(
      "cose_merged.jsonl",
      "{\"id\":\"c1\",\"answerKey\":\"B\",\"question\":{\"stem\":\"where?\",\"choices\":[{\"label\":\"A\",\"text\":"
      "\"home\"},{\"label\":\"B\",\"text\":\"park\"},{\"label\":\"C\",\"text\":\"car\"}]},\"explanation\":{\"open-"
      "ended\":\"parks are outside\"}}\n");
  const auto v10 = load_cose(merged, CoseVersion::V1_0);
  REQUIRE(v10.size() == 1);
  CHECK(v10[0].answer_index == 1);
  CHECK(*v10[0].explanation == "parks are outside");
  CHECK_THROWS_AS(load_cose(merged, CoseVersion::V1_11), SchemaError);

  const fs::path flat = write_temp("cose_flat.jsonl",
                                   "{\"id\":\"c2\",\"question\":\"q\",\"choices\":[\"a\",\"b\",\"c\",\"d\",\"e\"],"
                                   "\"answer\":\"d\",\"abstractive_explanation\":\"why\"}\n");
  CHECK(load_cose(flat, CoseVersion::V1_11)[0].answer_index == 3);

  const fs::path csv = write_temp("cose.csv",
                                  "id,question,choice_0,choice_1,choice_2,label,human_expl_open-ended\n"
                                  "c3,q,a,b,c,2,because c\n");
  const auto rows = load_cose(csv, CoseVersion::V1_0);
  CHECK(rows[0].answer_index == 2);
  CHECK(cose_option_count(parse_cose_version("v1.11")) == 5);
}

TEST_CASE("question-context retrieval") {
  const std::vector<std::string> passages = {"red apples grow", "apples are red fruit", "cars drive"};
  CHECK(retrieve_question_context("which red apples", passages, 1) == "red apples grow");
  CHECK(retrieve_question_context("nothing matches", passages, 1) == "red apples grow");
  CHECK_THROWS_AS(retrieve_question_context("q", {}, 1), RetrievalError);
}

TEST_CASE("split statistics") {
  const std::vector<McqaSample> xs = {two_option()};
  const SplitStats st = compute_stats("train", xs);
  CHECK(st.count == 1);
  CHECK(st.avg_question_words == 1.0);
  CHECK(st.options_per_problem == 2);
}

TEST_CASE("copy-key task structure") {
  CopyKeyConfig cfg;
  cfg.n_train = 50;
  cfg.n_dev = 10;
  const CopyKeySplits a = make_copy_key_task(cfg), b = make_copy_key_task(cfg);
  CHECK(a.train == b.train);
  CHECK(a.train.size() == 50);
  for (const McqaSample& s : a.train) {
    const auto q = tok::split_whitespace(s.question);
    const auto gold_ev = tok::split_whitespace((*s.evidence)[static_cast<std::size_t>(s.answer_index)]);
    // The gold evidence is the only passage sharing a token with the question.
    const auto shares = [&](const std::vector<std::string>& ev) {
      return std::any_of(ev.begin(), ev.end(), [&](const std::string& t) {
        return t[0] == 'w' && std::find(q.begin(), q.end(), t) != q.end();
      });
    };
    CHECK(shares(gold_ev));
    for (std::size_t j = 0; j < s.options.size(); ++j)
      if (static_cast<int>(j) != s.answer_index) CHECK_FALSE(shares(tok::split_whitespace((*s.evidence)[j])));
    CHECK(s.explanation->find(s.gold_option()) != std::string::npos);
  }
  cfg.keyed_answers = true;
  cfg.n_train = 500;
  const auto keyed = make_copy_key_task(cfg);
  std::map<std::string, std::string> rule;
  for (const McqaSample& s : keyed.train) {
    const std::string key = tok::split_whitespace(*s.explanation)[0];
    if (rule.count(key)) CHECK(rule[key] == s.gold_option());
    rule[key] = s.gold_option();
  }
  cfg.vocab = 4;
  CHECK_THROWS_AS(make_copy_key_task(cfg), ParameterError);
}
