// SPDX-License-Identifier: Apache-2.0

#include "pex/checkpoint.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "pex/errors.hpp"

namespace pex::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'E', 'X', 'T'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated tensor file " + path.string());
  return v;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return json{{"d", c.d},
              {"num_layers", c.num_layers},
              {"num_heads", c.num_heads},
              {"ffn_size", c.ffn_size},
              {"classifier_vocab_size", c.classifier_vocab_size},
              {"generator_vocab_size", c.generator_vocab_size},
              {"K", c.K},
              {"dropout", c.dropout},
              {"max_positions", c.max_positions},
              {"task", std::string(corpus::to_string(c.task))}};
}

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "d") c.d = value.get<std::size_t>();
      else if (key == "num_layers") c.num_layers = value.get<std::size_t>();
      else if (key == "num_heads") c.num_heads = value.get<std::size_t>();
      else if (key == "ffn_size") c.ffn_size = value.get<std::size_t>();
      else if (key == "classifier_vocab_size") c.classifier_vocab_size = value.get<std::size_t>();
      else if (key == "generator_vocab_size") c.generator_vocab_size = value.get<std::size_t>();
      else if (key == "K") c.K = value.get<std::size_t>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "max_positions") c.max_positions = value.get<std::size_t>();
      else if (key == "task") c.task = corpus::parse_task(value.get<std::string>());
      else throw ConfigError("unknown model field '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("model field '" + key + "': " + e.what());
    }
  }
  return c;
}

void write_parameters(const fs::path& path, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint64_t>(out, p->value.rows());
    put<std::uint64_t>(out, p->value.cols());
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

ParameterSet read_parameters(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a tensor file: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported tensor format version " + std::to_string(version));
  const auto count = get<std::uint64_t>(in, path);
  ParameterSet params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, path);
    if (name_len > 4096) throw CheckpointError("corrupt tensor name in " + path.string());
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError("corrupt tensor shape in " + path.string());
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw CheckpointError("truncated tensor file " + path.string());
    if (params.contains(name)) throw CheckpointError("duplicate tensor '" + name + "' in " + path.string());
    params.add(name, std::move(m));
  }
  return params;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::path tmp = dir;
  tmp += ".tmp";
  try {
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    json meta{{"format_version", kCheckpointVersion},
              {"config", model_config_to_json(ckpt.config)},
              {"epoch", ckpt.epoch},
              {"step", ckpt.step},
              {"classifier_mode", corpus::to_string(ckpt.classifier_mode)},
              {"scheme", ckpt.scheme == corpus::CorpusScheme::Mixed ? "mixed" : "homogeneous"},
              {"dev_accuracy", std::isfinite(ckpt.dev_accuracy) ? json(ckpt.dev_accuracy) : json(nullptr)}};
    ckpt.classifier_vocab.save(tmp / "classifier_vocab.txt");
    ckpt.generator_vocab.save(tmp / "generator_vocab.txt");
    write_parameters(tmp / "classifier.bin", ckpt.classifier);
    write_parameters(tmp / "generator.bin", ckpt.generator);
    {
      std::ofstream out(tmp / "checkpoint.json");
      out << meta.dump(2) << '\n';
      if (!out) throw CheckpointError("cannot write checkpoint.json");
    }
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  } catch (const fs::filesystem_error& e) {
    throw CheckpointError(std::string("saving checkpoint: ") + e.what());
  } catch (const IngestionError& e) {
    throw CheckpointError(e.what());
  }
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw CheckpointError("no checkpoint.json in " + dir.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(dir.string() + "/checkpoint.json: " + e.what());
  }
  if (meta.value("format_version", -1) != kCheckpointVersion)
    throw CheckpointError(dir.string() + ": unsupported checkpoint version");
  Checkpoint ckpt;
  try {
    ckpt.config = model_config_from_json(meta.at("config"));
    ckpt.epoch = meta.value("epoch", std::size_t{0});
    ckpt.step = meta.value("step", std::size_t{0});
    ckpt.classifier_mode = corpus::parse_classifier_mode(meta.value("classifier_mode", std::string("qa_only")));
    const std::string scheme = meta.value("scheme", std::string("homogeneous"));
    if (scheme != "mixed" && scheme != "homogeneous") throw ConfigError("unknown scheme '" + scheme + "'");
    ckpt.scheme = scheme == "mixed" ? corpus::CorpusScheme::Mixed : corpus::CorpusScheme::Homogeneous;
    if (meta.contains("dev_accuracy") && meta["dev_accuracy"].is_number())
      ckpt.dev_accuracy = meta["dev_accuracy"].get<double>();
  } catch (const json::exception& e) {
    throw CheckpointError(dir.string() + "/checkpoint.json: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(dir.string() + "/checkpoint.json: " + e.what());
  }
  try {
    ckpt.classifier_vocab = tok::Vocab::load(dir / "classifier_vocab.txt");
    ckpt.generator_vocab = tok::Vocab::load(dir / "generator_vocab.txt");
  } catch (const IngestionError& e) {
    throw CheckpointError(e.what());
  }
  ckpt.classifier = read_parameters(dir / "classifier.bin");
  ckpt.generator = read_parameters(dir / "generator.bin");
  return ckpt;
}

}  // namespace pex::nn
