// SPDX-License-Identifier: Apache-2.0

#include "pex/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "pex/checkpoint.hpp"
#include "pex/corpus.hpp"
#include "pex/decoding.hpp"
#include "pex/errors.hpp"
#include "pex/evalsuite.hpp"
#include "pex/kernels.hpp"
#include "pex/synthetic.hpp"
#include "pex/trainer.hpp"

namespace pex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json RunManifest::to_json() const {
  return json{{"command", command}, {"argv", argv},     {"config", config},   {"inputs", inputs},
              {"outputs", outputs}, {"seed", seed},     {"version", version}, {"started_at", started_at}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.value("config", json::object());
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.version = j.value("version", std::string());
    m.started_at = j.value("started_at", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "pex-out";
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path resolve_input(const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !fs::exists(path))
    if (const char* dir = std::getenv(kDataDirEnv)) {
      fs::path alt = fs::path(dir) / path;
      if (fs::exists(alt)) return alt;
    }
  if (!fs::exists(path)) throw IngestionError("input not found: " + p);
  return path;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_manifest(const fs::path& out_dir, const RunManifest& m) {
  fs::create_directories(out_dir);
  write_json_file(out_dir / "manifest.json", m.to_json());
}

json stats_json(const corpus::SplitStats& s) {
  return json{{"split", s.split},
              {"count", s.count},
              {"avg_question_words", s.avg_question_words},
              {"avg_option_words", s.avg_option_words},
              {"avg_explanation_words", s.avg_explanation_words},
              {"options_per_problem", s.options_per_problem}};
}

std::string sample_id(const corpus::Sample& s) {
  return std::visit([](const auto& x) { return x.id; }, s);
}

int gold_of(const corpus::Sample& s) {
  if (const auto* m = std::get_if<corpus::McqaSample>(&s)) return m->answer_index;
  return static_cast<int>(std::get<corpus::NliSample>(s).label);
}

std::string label_text(const corpus::Sample& s, int index) {
  if (const auto* m = std::get_if<corpus::McqaSample>(&s)) return m->options.at(static_cast<std::size_t>(index));
  return std::string(corpus::to_string(static_cast<corpus::NliLabel>(index)));
}

// ------------------------------------------------------------------ prepare

struct PrepareArgs {
  std::string dataset;
  std::vector<std::string> train;
  std::string dev, test;
  std::size_t n_train = 2000, n_dev = 200, num_options = 4, vocab = 64;
  double evidence_rate = 1.0;
  bool keyed = false;
};

int cmd_prepare(const PrepareArgs& a, const Globals& g, const std::vector<std::string>& argv, std::ostream& out) {
  const fs::path dir = g.out_dir;
  RunManifest m;
  m.command = "prepare";
  m.argv = argv;
  m.seed = g.seed.value_or(7);
  m.started_at = utc_now();
  m.config = {{"dataset", a.dataset}};
  std::vector<fs::path> train_paths;
  for (const auto& p : a.train) train_paths.push_back(resolve_input(p));
  std::optional<fs::path> dev_path, test_path;
  if (!a.dev.empty()) dev_path = resolve_input(a.dev);
  if (!a.test.empty()) test_path = resolve_input(a.test);
  for (const auto& p : train_paths) m.inputs.push_back(p.string());
  if (dev_path) m.inputs.push_back(dev_path->string());
  if (test_path) m.inputs.push_back(test_path->string());
  if (a.dataset == "synthetic")
    m.config.update({{"n_train", a.n_train},
                     {"n_dev", a.n_dev},
                     {"num_options", a.num_options},
                     {"vocab", a.vocab},
                     {"evidence_decisive_rate", a.evidence_rate},
                     {"keyed_answers", a.keyed}});
  else if (train_paths.empty() && !dev_path && !test_path)
    throw ConfigError("prepare " + a.dataset + " needs at least one of --train, --dev, --test");
  write_manifest(dir, m);

  json stats = json::array();
  json extra = json::object();
  auto emit_mcqa = [&](const std::string& split, const std::vector<corpus::McqaSample>& s) {
    corpus::write_mcqa_jsonl(dir / (split + ".jsonl"), s);
    stats.push_back(stats_json(corpus::compute_stats(split, s)));
    m.outputs.push_back((dir / (split + ".jsonl")).string());
  };
  auto emit_nli = [&](const std::string& split, const std::vector<corpus::NliSample>& s) {
    corpus::write_nli_jsonl(dir / (split + ".jsonl"), s);
    stats.push_back(stats_json(corpus::compute_stats(split, s)));
    m.outputs.push_back((dir / (split + ".jsonl")).string());
  };

  if (a.dataset == "synthetic") {
    corpus::CopyKeyConfig cfg;
    cfg.n_train = a.n_train;
    cfg.n_dev = a.n_dev;
    cfg.num_options = a.num_options;
    cfg.vocab = a.vocab;
    cfg.seed = m.seed;
    cfg.evidence_decisive_rate = a.evidence_rate;
    cfg.keyed_answers = a.keyed;
    const auto splits = corpus::make_copy_key_task(cfg);
    emit_mcqa("train", splits.train);
    emit_mcqa("dev", splits.dev);
  } else if (a.dataset == "cme") {
    if (train_paths.size() > 1) throw ConfigError("cme takes a single --train file");
    if (!train_paths.empty()) emit_mcqa("train", corpus::load_cme_jsonl(train_paths.front()));
    if (dev_path) emit_mcqa("dev", corpus::load_cme_jsonl(*dev_path));
    if (test_path) emit_mcqa("test", corpus::load_cme_jsonl(*test_path));
  } else if (a.dataset == "esnli") {
    if (train_paths.empty() || !dev_path || !test_path) throw ConfigError("esnli needs --train, --dev and --test");
    const corpus::EsnliSplits s = corpus::load_esnli(train_paths, *dev_path, *test_path);
    emit_nli("train", s.train);
    emit_nli("dev", s.dev);
    emit_nli("test", s.test);
    extra["raw_train_count"] = s.raw_train_count;
    extra["filtered_train_count"] = s.train.size();
  } else {
    const corpus::CoseVersion v = corpus::parse_cose_version(a.dataset.substr(5));
    if (train_paths.size() > 1) throw ConfigError(a.dataset + " takes a single --train file");
    if (!train_paths.empty()) emit_mcqa("train", corpus::load_cose(train_paths.front(), v));
    if (dev_path) emit_mcqa("dev", corpus::load_cose(*dev_path, v));
    if (test_path) emit_mcqa("test", corpus::load_cose(*test_path, v));
  }
  json report{{"dataset", a.dataset}, {"splits", stats}};
  report.update(extra);
  write_json_file(dir / "stats.json", report);
  m.outputs.push_back((dir / "stats.json").string());
  write_manifest(dir, m);
  out << report.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a, const Globals& g, const std::vector<std::string>& argv, std::ostream& out,
              std::ostream& err) {
  if (g.config_path.empty()) throw ConfigError("train requires --config");
  json cfg_json = read_json_file(resolve_input(g.config_path));
  if (!cfg_json.is_object()) throw ConfigError("config must be a JSON object");

  std::vector<std::string> errors;
  std::string train_path, dev_path, dataset;
  for (const char* key : {"train_path", "dev_path"}) {
    if (!cfg_json.contains(key)) errors.push_back(std::string(key) + ": required field missing");
    else if (!cfg_json[key].is_string()) errors.push_back(std::string(key) + ": expected a string");
  }
  if (errors.empty()) {
    train_path = cfg_json["train_path"].get<std::string>();
    dev_path = cfg_json["dev_path"].get<std::string>();
  }
  if (cfg_json.contains("dataset")) {
    if (cfg_json["dataset"].is_string()) dataset = cfg_json["dataset"].get<std::string>();
    else errors.push_back("dataset: expected a string");
  }
  json train_fields = cfg_json;
  for (const char* key : {"train_path", "dev_path", "dataset"}) train_fields.erase(key);
  train::TrainConfig config;
  try {
    config = train::train_config_from_json(train_fields);
    if (!train_fields.contains("batch_size") && !dataset.empty())
      config.batch_size = train::default_batch_size(dataset);
    if (g.seed) config.seed = *g.seed;
    if (a.epochs) config.epochs = *a.epochs;
    config.validate();
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (!errors.empty()) {
    std::string msg = "invalid config " + g.config_path + ":";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  const fs::path dir = g.out_dir;
  const fs::path train_file = resolve_input(train_path), dev_file = resolve_input(dev_path);
  RunManifest m;
  m.command = "train";
  m.argv = argv;
  m.seed = config.seed;
  m.started_at = utc_now();
  m.config = train::to_json(config);
  m.config["train_path"] = train_path;
  m.config["dev_path"] = dev_path;
  m.inputs = {train_file.string(), dev_file.string()};
  m.outputs = {(dir / "checkpoint").string(), (dir / "metrics.jsonl").string(), (dir / "train_summary.json").string()};
  write_manifest(dir, m);

  const std::vector<corpus::Sample> train = corpus::load_samples_jsonl(train_file);
  const std::vector<corpus::Sample> dev = corpus::load_samples_jsonl(dev_file);
  std::ofstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw IngestionError("cannot write " + (dir / "metrics.jsonl").string());
  train::FitOptions fo;
  fo.checkpoint_dir = dir / "checkpoint";
  fo.metrics = &metrics;
  fo.log = &err;
  const train::FitResult r = train::fit(train, dev, config, fo);
  if (!fs::exists(dir / "checkpoint" / "checkpoint.json")) nn::save_checkpoint(dir / "checkpoint", r.best);
  const json summary{{"best_dev_accuracy", r.best_dev_accuracy},
                     {"best_epoch", r.best_epoch},
                     {"dev_history", r.dev_history},
                     {"steps", r.steps},
                     {"epochs_run", r.epochs_run},
                     {"checkpoint", (dir / "checkpoint").string()}};
  write_json_file(dir / "train_summary.json", summary);
  out << (dir / "checkpoint").string() << '\n';
  return 0;
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::string checkpoint, data, output;
  decoding::DecodeConfig decode;
};

int cmd_generate(const GenerateArgs& a, const Globals& g, const std::vector<std::string>& argv, std::ostream& out,
                 std::ostream& err) {
  a.decode.validate();
  const fs::path dir = g.out_dir;
  const fs::path ckpt_dir = resolve_input(a.checkpoint), data_file = resolve_input(a.data);
  const fs::path output = a.output.empty() ? dir / "explanations.jsonl" : fs::path(a.output);
  RunManifest m;
  m.command = "generate";
  m.argv = argv;
  m.started_at = utc_now();
  m.config = {{"beams", a.decode.beams},
              {"max_len", a.decode.max_len},
              {"repetition_penalty", a.decode.repetition_penalty},
              {"num_return", a.decode.num_return},
              {"length_normalization_alpha", a.decode.length_normalization_alpha}};
  m.inputs = {ckpt_dir.string(), data_file.string()};
  m.outputs = {output.string()};
  write_manifest(dir, m);

  const nn::Checkpoint ckpt = nn::load_checkpoint(ckpt_dir);
  const nn::Classifier classifier = train::classifier_from(ckpt);
  const nn::Generator generator = train::generator_from(ckpt);
  const std::vector<corpus::Sample> samples = corpus::load_samples_jsonl(data_file);
  const std::size_t max_len = ckpt.config.max_positions;

  std::vector<json> records(samples.size());
  kernels::parallel_for(samples.size(), [&](std::size_t i) {
    const corpus::Sample& s = samples[i];
    json rec{{"id", sample_id(s)}};
    try {
      train::EncodedSample enc;
      for (const auto& inst : corpus::build_classifier_inputs(s, ckpt.classifier_mode))
        enc.classifier_inputs.push_back(tok::encode(inst.input_text, ckpt.classifier_vocab, max_len));
      const int pred = train::predict(classifier, std::span(&enc, 1)).front();
      rec["predicted_index"] = pred;
      rec["predicted_label"] = label_text(s, pred);
      const std::vector<int> src =
          tok::encode(corpus::generator_source(s, ckpt.scheme) + " [EOS]", ckpt.generator_vocab, max_len);
      const auto hyps = decoding::beam_search(generator, src, a.decode);
      if (hyps.empty()) throw DecodeError("beam search returned no hypothesis");
      rec["explanation"] = corpus::strip_explanation_template(tok::decode(hyps.front().ids, ckpt.generator_vocab));
      if (a.decode.num_return > 1) {
        json cands = json::array();
        for (const auto& h : hyps) cands.push_back(tok::decode(h.ids, ckpt.generator_vocab));
        rec["candidates"] = cands;
      }
    } catch (const std::exception& e) {
      rec["error"] = e.what();
    }
    records[i] = std::move(rec);
  });

  fs::create_directories(output.parent_path().empty() ? fs::path(".") : output.parent_path());
  std::ofstream file(output);
  if (!file) throw IngestionError("cannot write " + output.string());
  std::size_t failures = 0;
  for (const json& r : records) {
    failures += r.contains("error");
    file << r.dump() << '\n';
  }
  if (failures) err << failures << " of " << records.size() << " samples failed to decode\n";
  out << output.string() << '\n';
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string data, checkpoint, explanations, probe_train, probe_dev, probe_config, output;
  std::vector<std::string> metrics{"accuracy"};
  std::size_t num_probes = 3;
};

std::map<std::string, json> read_explanations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read " + path.string());
  std::map<std::string, json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      std::string id = j.at("id").get<std::string>();
      out[std::move(id)] = std::move(j);
    } catch (const json::exception& e) {
      throw IngestionError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

int cmd_eval(const EvalArgs& a, const Globals& g, const std::vector<std::string>& argv, std::ostream& out,
             std::ostream& err) {
  for (const std::string& metric : a.metrics) {
    if (metric != "accuracy" && metric != "bleu" && metric != "accuracy_ye")
      throw ConfigError("unknown metric '" + metric + "' (expected accuracy, bleu, accuracy_ye)");
    if (metric == "accuracy" && a.checkpoint.empty() && a.explanations.empty())
      throw ConfigError("metric accuracy needs --checkpoint or --explanations");
    if (metric == "bleu" && a.explanations.empty()) throw ConfigError("metric bleu needs --explanations");
    if (metric == "accuracy_ye" && (a.explanations.empty() || a.probe_train.empty()))
      throw ConfigError("metric accuracy_ye needs --explanations and --probe-train");
  }
  const fs::path dir = g.out_dir;
  const fs::path output = a.output.empty() ? dir / "eval_report.json" : fs::path(a.output);
  const fs::path data_file = resolve_input(a.data);
  RunManifest m;
  m.command = "eval";
  m.argv = argv;
  m.seed = g.seed.value_or(42);
  m.started_at = utc_now();
  m.config = {{"metrics", a.metrics}, {"num_probes", a.num_probes}};
  m.inputs = {data_file.string()};
  if (!a.checkpoint.empty()) m.inputs.push_back(a.checkpoint);
  if (!a.explanations.empty()) m.inputs.push_back(a.explanations);
  if (!a.probe_train.empty()) m.inputs.push_back(a.probe_train);
  m.outputs = {output.string()};
  write_manifest(dir, m);

  const std::vector<corpus::Sample> samples = corpus::load_samples_jsonl(data_file);
  std::map<std::string, json> expl;
  if (!a.explanations.empty()) expl = read_explanations(resolve_input(a.explanations));
  auto explanation_for = [&](const corpus::Sample& s) -> const json& {
    const auto it = expl.find(sample_id(s));
    if (it == expl.end()) throw EvalError("no generated output for sample " + sample_id(s));
    return it->second;
  };

  eval::EvalReport report;
  report.num_samples = samples.size();
  auto wants = [&](const char* metric) {
    return std::find(a.metrics.begin(), a.metrics.end(), metric) != a.metrics.end();
  };

  if (wants("accuracy")) {
    std::vector<int> preds, golds;
    if (!a.explanations.empty()) {
      for (const auto& s : samples) {
        const json& r = explanation_for(s);
        if (!r.contains("predicted_index")) throw EvalError("accuracy: sample " + sample_id(s) + " has no prediction");
        preds.push_back(r["predicted_index"].get<int>());
        golds.push_back(gold_of(s));
      }
    } else {
      const nn::Checkpoint ckpt = nn::load_checkpoint(resolve_input(a.checkpoint));
      const nn::Classifier classifier = train::classifier_from(ckpt);
      std::vector<train::EncodedSample> enc(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) {
        for (const auto& inst : corpus::build_classifier_inputs(samples[i], ckpt.classifier_mode))
          enc[i].classifier_inputs.push_back(
              tok::encode(inst.input_text, ckpt.classifier_vocab, ckpt.config.max_positions));
        golds.push_back(gold_of(samples[i]));
      }
      preds = train::predict(classifier, enc);
    }
    report.accuracy = eval::accuracy(preds, golds);
    report.num_correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) report.num_correct += preds[i] == golds[i];
  }

  if (wants("bleu")) {
    std::vector<std::string> cands;
    std::vector<std::vector<std::string>> refs;
    for (const auto& s : samples) {
      std::vector<std::string> r;
      if (const auto* mc = std::get_if<corpus::McqaSample>(&s)) {
        if (mc->explanation) r.push_back(*mc->explanation);
      } else {
        const auto nr = std::get<corpus::NliSample>(s).references();
        r.assign(nr.begin(), nr.end());
      }
      if (r.empty()) continue;
      const json& rec = explanation_for(s);
      cands.push_back(corpus::strip_explanation_template(rec.value("explanation", std::string())));
      refs.push_back(std::move(r));
    }
    if (cands.empty()) throw EvalError("bleu: no sample in " + a.data + " has a reference explanation");
    report.bleu = eval::corpus_bleu(cands, refs);
  }

  if (wants("accuracy_ye")) {
    std::vector<std::pair<corpus::McqaSample, std::string>> pairs;
    for (const auto& s : samples) {
      const auto* mc = std::get_if<corpus::McqaSample>(&s);
      if (!mc) throw EvalError("accuracy_ye is defined for multiple-choice data only");
      pairs.emplace_back(*mc, explanation_for(s).value("explanation", std::string()));
    }
    auto load_mcqa = [](const fs::path& p) {
      std::vector<corpus::McqaSample> out;
      for (auto& s : corpus::load_samples_jsonl(p)) {
        auto* mc = std::get_if<corpus::McqaSample>(&s);
        if (!mc) throw EvalError("probe data must be multiple-choice: " + p.string());
        out.push_back(std::move(*mc));
      }
      return out;
    };
    const auto probe_train = load_mcqa(resolve_input(a.probe_train));
    eval::SimulatabilityOptions so;
    so.num_probes = a.num_probes;
    if (!a.probe_config.empty()) so.probe_config = train::train_config_from_json(read_json_file(resolve_input(a.probe_config)));
    so.probe_config.seed = m.seed;
    if (!a.probe_dev.empty()) so.probe_dev = load_mcqa(resolve_input(a.probe_dev));
    so.log = &err;
    report.simulatability = eval::simulatability(probe_train, pairs, so);
  }

  const json j = report.to_json();
  fs::create_directories(output.parent_path().empty() ? fs::path(".") : output.parent_path());
  write_json_file(output, j);
  out << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint predict-and-explain training and evaluation", "pex"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and the run manifest")->capture_default_str();

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "Normalize a dataset into JSONL splits plus stats");
  prepare->add_option("--dataset", pa.dataset, "Dataset to prepare")
      ->required()
      ->check(CLI::IsMember({"cme", "esnli", "cose-v1.0", "cose-v1.11", "synthetic"}));
  prepare->add_option("--train", pa.train, "Training file(s)");
  prepare->add_option("--dev", pa.dev, "Development file");
  prepare->add_option("--test", pa.test, "Test file");
  prepare->add_option("--n-train", pa.n_train, "Synthetic: training samples")->capture_default_str();
  prepare->add_option("--n-dev", pa.n_dev, "Synthetic: dev samples")->capture_default_str();
  prepare->add_option("--num-options", pa.num_options, "Synthetic: options per question")->capture_default_str();
  prepare->add_option("--vocab", pa.vocab, "Synthetic: content tokens")->capture_default_str();
  prepare->add_option("--evidence-rate", pa.evidence_rate, "Synthetic: chance the gold evidence holds the key")
      ->capture_default_str();
  prepare->add_flag("--keyed", pa.keyed, "Synthetic: answer is a fixed function of the key");

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train from a JSON config; writes checkpoint and metrics");
  trainc->add_option("--epochs", ta.epochs, "Override the configured epoch count");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Predict labels and decode explanations");
  generate->add_option("--checkpoint", ga.checkpoint, "Checkpoint directory")->required();
  generate->add_option("--data", ga.data, "Normalized JSONL samples")->required();
  generate->add_option("--output", ga.output, "Output JSONL (default: <out-dir>/explanations.jsonl)");
  generate->add_option("--beams", ga.decode.beams, "Beam width")->capture_default_str();
  generate->add_option("--max-len", ga.decode.max_len, "Maximum generated length")->capture_default_str();
  generate->add_option("--rep-penalty", ga.decode.repetition_penalty, "Repetition penalty (>= 1)")
      ->capture_default_str();
  generate->add_option("--num-return", ga.decode.num_return, "Hypotheses to keep per sample")->capture_default_str();
  generate->add_option("--length-alpha", ga.decode.length_normalization_alpha, "Length normalization exponent")
      ->capture_default_str();

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Score predictions and explanations");
  evalc->add_option("--data", ea.data, "Normalized JSONL samples with gold labels")->required();
  evalc->add_option("--checkpoint", ea.checkpoint, "Checkpoint directory (accuracy from the classifier)");
  evalc->add_option("--explanations", ea.explanations, "Output of `pex generate`");
  evalc->add_option("--metrics", ea.metrics, "accuracy, bleu, accuracy_ye")->delimiter(',')->capture_default_str();
  evalc->add_option("--probe-train", ea.probe_train, "Samples with evidence for training probes");
  evalc->add_option("--probe-dev", ea.probe_dev, "Samples with evidence for probe model selection");
  evalc->add_option("--probe-config", ea.probe_config, "Training config JSON for the probes");
  evalc->add_option("--num-probes", ea.num_probes, "Independently seeded probes")->capture_default_str();
  evalc->add_option("--output", ea.output, "Report path (default: <out-dir>/eval_report.json)");

  std::string manifest_path;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest_path, "manifest.json")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return 2;
  }

  try {
    if (*prepare) return cmd_prepare(pa, g, args, out);
    if (*trainc) return cmd_train(ta, g, args, out, err);
    if (*generate) return cmd_generate(ga, g, args, out, err);
    if (*evalc) return cmd_eval(ea, g, args, out, err);
    const RunManifest m = RunManifest::from_json(read_json_file(manifest_path));
    return run(m.argv, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace pex::cli
