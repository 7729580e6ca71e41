#include <doctest.h>

#include <string>
#include <vector>

#include "pex/errors.hpp"
#include "pex/evalsuite.hpp"
#include "pex/synthetic.hpp"
#include "support.hpp"

using namespace pex;
using namespace pex::eval;
using doctest::Approx;

TEST_CASE("accuracy") {
  const std::vector<int> g = {0, 1, 2, 3, 0};
  CHECK(accuracy(std::vector<int>{0, 1, 2, 0, 1}, g) == Approx(0.6));
  CHECK(accuracy(g, g) == 1.0);
  CHECK(accuracy(std::vector<int>{1, 0, 0, 0, 1}, g) == 0.0);
  CHECK_THROWS_AS(accuracy(std::vector<int>{0}, g), EvalError);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), EvalError);
}

TEST_CASE("BLEU extremes and a hand value") {
  using R = std::vector<std::vector<std::string>>;
  const std::vector<std::string> same = {"the cat sat on the mat", "a b c d e"};
  CHECK(corpus_bleu(same, R{{same[0]}, {same[1]}}) == Approx(100.0).epsilon(1e-12));
  const std::vector<std::string> disjoint = {"x y z"};
  CHECK(corpus_bleu(disjoint, R{{"a b c"}}) == 0.0);
  // p = 3/4, 2/3, 1/2 and a smoothed 1/2; equal lengths, no brevity penalty.
  const std::vector<std::string> c = {"a b c d"};
  CHECK(corpus_bleu(c, R{{"a b c e"}}) == Approx(59.4604).epsilon(1e-6));
  CHECK(corpus_bleu(c, R{{"a b c e"}}) == Approx(100.0 * std::pow(0.125, 0.25)).epsilon(1e-12));
  const std::vector<std::string> empty = {""};
  CHECK(corpus_bleu(empty, R{{"a b"}}) == 0.0);
  CHECK_THROWS_AS(corpus_bleu(c, R{}), EvalError);
}

TEST_CASE("BLEU agrees with the oracle on random corpora") {
  Rng rng(17);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
  auto sentence = [&](std::size_t max_len) {
    std::string s;
    const std::size_t n = 1 + uniform_below(rng, max_len);
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[uniform_below(rng, words.size())];
    return s;
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> cands;
    std::vector<std::vector<std::string>> refs;
    const std::size_t n = 1 + uniform_below(rng, 4);
    for (std::size_t i = 0; i < n; ++i) {
      cands.push_back(sentence(9));
      refs.push_back({sentence(9)});
      if (uniform_below(rng, 2)) refs.back().push_back(sentence(9));
    }
    CHECK(corpus_bleu(cands, refs) == Approx(pex::testing::oracle::bleu(cands, refs)).epsilon(1e-9));
  }
}

TEST_CASE("adding references never lowers BLEU") {
  Rng rng(3);
  const std::vector<std::string> cands = {"a b c d e", "b c a"};
  std::vector<std::vector<std::string>> refs = {{"a b x d e"}, {"b c c"}};
  const double base = corpus_bleu(cands, refs);
  refs[0].push_back("c d e");
  CHECK(corpus_bleu(cands, refs) >= base);
}

TEST_CASE("simulatability with one probe on the copy-key task") {
  corpus::CopyKeyConfig cfg;
  cfg.n_train = 40;
  cfg.n_dev = 10;
  cfg.num_options = 3;
  cfg.vocab = 10;
  const auto data = corpus::make_copy_key_task(cfg);

  SimulatabilityOptions o;
  o.num_probes = 1;
  o.probe_config.epochs = 1;
  o.probe_config.model.d = 8;
  o.probe_config.model.num_layers = 1;
  o.probe_config.model.num_heads = 1;
  o.probe_config.model.ffn_size = 8;
  o.probe_config.max_seq_len = 48;
  o.probe_config.grad_accumulation_steps = 1;
  std::vector<std::pair<corpus::McqaSample, std::string>> eval;
  for (const auto& s : data.dev) eval.emplace_back(s, *s.explanation);

  const SimulatabilityReport r = simulatability(data.train, eval, o);
  REQUIRE(r.probes.size() == 1);
  CHECK(r.accuracy_ye == r.probes[0].accuracy);
  CHECK(r.accuracy_ye >= 0.0);
  CHECK(r.accuracy_ye <= 1.0);

  const ProbeSet set = train_probes(data.train, o);
  CHECK(score_probes(set, eval).accuracy_ye == r.accuracy_ye);

  EvalReport report;
  report.simulatability = r;
  report.num_samples = eval.size();
  const auto j = report.to_json();
  CHECK(j.contains("accuracy_ye"));
  CHECK(j["probes"].size() == 1);
  CHECK_FALSE(j.contains("bleu"));

  o.num_probes = 0;
  CHECK_THROWS_AS(simulatability(data.train, eval, o), ParameterError);
  o.num_probes = 1;
  auto no_evidence = data.train;
  no_evidence[0].evidence.reset();
  CHECK_THROWS_AS(simulatability(no_evidence, eval, o), EvalError);
  CHECK_THROWS_AS(simulatability(data.train, {}, o), EvalError);
}
