#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "pex/errors.hpp"
#include "pex/synthetic.hpp"
#include "pex/trainer.hpp"

using namespace pex;
using namespace pex::train;
using corpus::ClassifierMode;
using corpus::CorpusScheme;

namespace {

corpus::McqaSample mcqa(const std::string& id, std::size_t k, int answer, bool explained) {
  corpus::McqaSample s;
  s.id = id;
  s.question = "which one " + id;
  for (std::size_t i = 0; i < k; ++i) s.options.push_back("opt" + std::to_string(i));
  s.answer_index = answer;
  if (explained) s.explanation = "because of " + id;
  return s;
}

std::vector<corpus::Sample> copy_key(std::size_t n_train, std::size_t n_dev, std::vector<corpus::Sample>* dev) {
  corpus::CopyKeyConfig c;
  c.n_train = n_train;
  c.n_dev = n_dev;
  c.vocab = 12;
  c.num_options = 3;
  c.seed = 5;
  const auto splits = corpus::make_copy_key_task(c);
  if (dev) dev->assign(splits.dev.begin(), splits.dev.end());
  return {splits.train.begin(), splits.train.end()};
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.model.d = 8;
  c.model.num_layers = 1;
  c.model.num_heads = 2;
  c.model.ffn_size = 16;
  c.max_seq_len = 48;
  c.batch_size = 2;
  c.grad_accumulation_steps = 2;
  c.classifier_lr = 1e-3;
  c.seed = 11;
  return c;
}

struct Models {
  nn::Classifier classifier;
  nn::Generator generator;
};

Models make_models(const Vocabs& v, const TrainConfig& c, std::size_t K) {
  nn::ModelConfig mc = c.model;
  mc.classifier_vocab_size = v.classifier.size();
  mc.generator_vocab_size = v.generator.size();
  mc.K = K;
  mc.dropout = c.dropout;
  mc.max_positions = c.max_seq_len;
  return {nn::Classifier(mc, 21), nn::Generator(mc, 22)};
}

}  // namespace

TEST_CASE("make_batch shapes") {
  std::vector<corpus::Sample> two = {mcqa("a", 5, 1, true), mcqa("b", 5, 4, true)};
  const Batch b = make_batch(two, ClassifierMode::QaOnly, CorpusScheme::Homogeneous);
  REQUIRE(b.classifier.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(b.classifier[i].option_index == static_cast<int>(i % 5));
  CHECK(b.classifier[5].input_text.find("which one b") != std::string::npos);
  CHECK(b.generator.size() == 2);
  CHECK(b.answers == std::vector<int>{1, 4});

  std::vector<corpus::Sample> one = {mcqa("c", 3, 1, false)};
  const Batch u = make_batch(one, ClassifierMode::QaOnly, CorpusScheme::Mixed);
  CHECK(u.generator[0].target_text == "The answer is opt1");
  CHECK_FALSE(u.generator[0].has_explanation);

  std::vector<corpus::Sample> nli;
  for (int i = 0; i < 3; ++i) {
    corpus::NliSample s;
    s.premise = "p" + std::to_string(i);
    s.hypothesis = "h";
    s.label = static_cast<corpus::NliLabel>(i);
    s.explanations = {"e"};
    nli.push_back(s);
  }
  const Batch n = make_batch(nli, ClassifierMode::QaOnly, CorpusScheme::Homogeneous);
  CHECK(n.classifier.size() == 3);
  CHECK(n.answers == std::vector<int>{0, 1, 2});
  CHECK(n.K == 3);

  std::vector<corpus::Sample> mixed = {mcqa("a", 5, 0, true), mcqa("b", 4, 0, true)};
  CHECK_THROWS_AS(make_batch(mixed, ClassifierMode::QaOnly, CorpusScheme::Homogeneous), BatchError);
  std::vector<corpus::Sample> tasks = {mcqa("a", 3, 0, true), nli[0]};
  CHECK_THROWS_AS(make_batch(tasks, ClassifierMode::QaOnly, CorpusScheme::Homogeneous), BatchError);
  CHECK_THROWS_AS(make_batch({}, ClassifierMode::QaOnly, CorpusScheme::Homogeneous), BatchError);
}

TEST_CASE("unexplained targets carry no explanation tokens") {
  std::vector<corpus::Sample> s = {mcqa("a", 3, 2, true), mcqa("b", 3, 0, false)};
  const Batch b = make_batch(s, ClassifierMode::QaOnly, CorpusScheme::Mixed);
  const Vocabs v = build_vocabs(s, ClassifierMode::QaOnly, CorpusScheme::Mixed, 100);
  const auto enc = encode_batch(b, v, 64);
  const int because = v.generator.id("because");
  CHECK(std::find(enc[0].target.begin(), enc[0].target.end(), because) != enc[0].target.end());
  CHECK(std::find(enc[1].target.begin(), enc[1].target.end(), because) == enc[1].target.end());
  CHECK(enc[1].target == tok::encode("The answer is opt0 [EOS]", v.generator, 64));
}

TEST_CASE("accumulated micro-batches equal one combined batch under sum reduction") {
  const auto train = copy_key(8, 1, nullptr);
  TrainConfig c = tiny_config();
  c.reduction = objective::Reduction::Sum;
  c.dropout = 0.0;
  const Vocabs v = build_vocabs(train, c.classifier_mode, CorpusScheme::Homogeneous, 200);
  const auto enc = encode_batch(make_batch(train, c.classifier_mode, CorpusScheme::Homogeneous), v, c.max_seq_len);

  Models a = make_models(v, c, 3), b = make_models(v, c, 3);
  Trainer ta(c, a.classifier, a.generator, 10), tb(c, b.classifier, b.generator, 10);
  std::vector<std::vector<EncodedSample>> four;
  for (std::size_t i = 0; i < 4; ++i) four.push_back({enc[2 * i], enc[2 * i + 1]});
  const std::vector<std::vector<EncodedSample>> whole = {enc};
  for (int step = 0; step < 1; ++step) {
    ta.train_step(four);
    tb.train_step(whole);
  }
  double worst = 0.0;
  auto compare = [&](const nn::ParameterSet& x, const nn::ParameterSet& y) {
    auto ix = x.begin();
    for (auto iy = y.begin(); iy != y.end(); ++iy, ++ix)
      for (std::size_t k = 0; k < (*ix)->value.size(); ++k)
        worst = std::max(worst, std::abs((*ix)->value.storage()[k] - (*iy)->value.storage()[k]));
  };
  compare(a.classifier.params(), b.classifier.params());
  compare(a.generator.params(), b.generator.params());
  CHECK(worst < 1e-6);
}

TEST_CASE("weights (1,0,0,0) follow the classifier-only trajectory bitwise") {
  const auto train = copy_key(8, 1, nullptr);
  TrainConfig c = tiny_config();
  c.weights = {1.0, 0.0, 0.0, 0.0, 1.0};
  c.dropout = 0.1;
  const Vocabs v = build_vocabs(train, c.classifier_mode, CorpusScheme::Homogeneous, 200);
  const auto enc = encode_batch(make_batch(train, c.classifier_mode, CorpusScheme::Homogeneous), v, c.max_seq_len);
  Models joint = make_models(v, c, 3), base = make_models(v, c, 3);
  const nn::ParameterSet generator_before = joint.generator.params().clone();

  const std::size_t total = 4;
  Trainer trainer(c, joint.classifier, joint.generator, total);
  // Plain cross-entropy training of the classifier alone.
  auto opt = optim::make_optimizer(c.classifier_optimizer);
  Rng drop(derive_seed(c.seed, 3));
  const std::size_t warmup = static_cast<std::size_t>(c.warmup_proportion * total);
  for (std::size_t step = 0; step < total; ++step) {
    std::vector<std::vector<EncodedSample>> micro = {{enc[(4 * step) % 8], enc[(4 * step + 1) % 8]},
                                                     {enc[(4 * step + 2) % 8], enc[(4 * step + 3) % 8]}};
    trainer.train_step(micro);
    for (const auto& mb : micro) {
      nn::Tape t(true, &drop);
      std::vector<nn::Var> rows;
      std::vector<int> answers;
      for (const auto& s : mb) {
        std::vector<nn::Var> cols;
        for (const auto& ids : s.classifier_inputs) cols.push_back(base.classifier.scores(t, ids));
        rows.push_back(nn::concat_cols(cols));
        answers.push_back(s.answer);
      }
      t.backward(objective::classification_loss(nn::concat_rows(rows), answers), 1.0 / micro.size());
    }
    optim::clip_grad_norm(base.classifier.params(), c.grad_clip_norm);
    opt->step(base.classifier.params(), c.classifier_lr * optim::linear_schedule(step, warmup, total));
    base.classifier.params().zero_grad();
  }
  auto it = base.classifier.params().begin();
  for (const auto& p : joint.classifier.params()) {
    CAPTURE(p->name);
    CHECK(p->value.storage() == (*it)->value.storage());
    ++it;
  }
  auto g = generator_before.begin();
  for (const auto& p : joint.generator.params()) CHECK(p->value.storage() == (*g++)->value.storage());
}

TEST_CASE("best checkpoint tracker") {
  TrainConfig c = tiny_config();
  nn::ModelConfig mc = c.model;
  mc.classifier_vocab_size = 8;
  mc.generator_vocab_size = 8;
  mc.K = 3;
  const nn::Classifier cl(mc, 1);
  const nn::Generator gen(mc, 2);
  BestCheckpointTracker t;
  CHECK_FALSE(t.has_best());
  const Vocabs v;
  CHECK(t.offer(0.3, 1, 10, cl, gen, v));
  CHECK(t.offer(0.5, 2, 20, cl, gen, v));
  CHECK_FALSE(t.offer(0.4, 3, 30, cl, gen, v));
  CHECK_FALSE(t.offer(0.5, 4, 40, cl, gen, v));
  CHECK(t.best_epoch() == 2);
  const nn::Checkpoint ck = t.take();
  CHECK(ck.epoch == 2);
  CHECK(ck.step == 20);
  CHECK(ck.dev_accuracy == 0.5);
  CHECK_THROWS_AS(t.take(), EvalError);
}

TEST_CASE("fit with zero epochs returns the initialization") {
  std::vector<corpus::Sample> dev;
  const auto train = copy_key(6, 5, &dev);
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const FitResult r = fit(train, dev, c);
  CHECK(r.best.epoch == 0);
  CHECK(r.steps == 0);
  CHECK(r.dev_history.size() == 1);
  CHECK(r.best.dev_accuracy == r.dev_history[0]);
  CHECK(r.best_dev_accuracy >= 0.0);
}

TEST_CASE("fit is seed-deterministic and its best checkpoint re-evaluates exactly") {
  std::vector<corpus::Sample> dev;
  const auto train = copy_key(12, 6, &dev);
  TrainConfig c = tiny_config();
  c.epochs = 3;
  std::ostringstream m1, m2;
  FitOptions o1, o2;
  o1.metrics = &m1;
  o2.metrics = &m2;
  const FitResult a = fit(train, dev, c, o1);
  const FitResult b = fit(train, dev, c, o2);
  CHECK(m1.str() == m2.str());
  CHECK(!m1.str().empty());
  CHECK(a.dev_history == b.dev_history);
  CHECK(a.dev_history.size() == 3);

  const Vocabs v{a.best.classifier_vocab, a.best.generator_vocab};
  const auto enc = encode_batch(make_batch(dev, c.classifier_mode, CorpusScheme::Homogeneous), v, c.max_seq_len);
  CHECK(evaluate_accuracy(classifier_from(a.best), enc) == a.best_dev_accuracy);

  c.seed = 12;
  std::ostringstream m3;
  FitOptions o3;
  o3.metrics = &m3;
  fit(train, dev, c, o3);
  CHECK(m3.str() != m1.str());
}

TEST_CASE("fit writes the best checkpoint to disk") {
  std::vector<corpus::Sample> dev;
  const auto train = copy_key(6, 4, &dev);
  const auto dir = std::filesystem::temp_directory_path() / "pex_fit_ckpt";
  std::filesystem::remove_all(dir);
  TrainConfig c = tiny_config();
  c.epochs = 1;
  FitOptions o;
  o.checkpoint_dir = dir;
  const FitResult r = fit(train, dev, c, o);
  const nn::Checkpoint back = nn::load_checkpoint(dir);
  CHECK(back.epoch == r.best.epoch);
  CHECK(back.dev_accuracy == r.best_dev_accuracy);
  std::filesystem::remove_all(dir);
}

TEST_CASE("fit input errors") {
  std::vector<corpus::Sample> dev;
  const auto train = copy_key(4, 2, &dev);
  CHECK_THROWS_AS(fit({}, dev, tiny_config()), BatchError);
  CHECK_THROWS_AS(fit(train, {}, tiny_config()), BatchError);
  TrainConfig bad = tiny_config();
  bad.batch_size = 0;
  CHECK_THROWS_AS(fit(train, dev, bad), ConfigError);
}

TEST_CASE("training config JSON") {
  const TrainConfig c = tiny_config();
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(default_batch_size("esnli") == 16);
  CHECK(default_batch_size("cose-v1.0") == 4);
  CHECK(default_batch_size("cme") == 4);

  try {
    train_config_from_json(nlohmann::json{{"epochs", "ten"}, {"learning_rate", 1.0}, {"model", {{"depth", 2}}}});
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epochs") != std::string::npos);
    CHECK(msg.find("learning_rate") != std::string::npos);
    CHECK(msg.find("model.depth") != std::string::npos);
  }
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::array()), ConfigError);

  TrainConfig v;
  v.dropout = 1.0;
  v.classifier_optimizer = "sgd";
  try {
    v.validate();
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dropout") != std::string::npos);
    CHECK(msg.find("classifier_optimizer") != std::string::npos);
  }
}
