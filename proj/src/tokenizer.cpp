// SPDX-License-Identifier: Apache-2.0

#include "pex/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "pex/errors.hpp"

namespace pex::tok {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_special_literal(std::string_view t) {
  return t == kPadToken || t == kClsToken || t == kSepToken || t == kEosToken || t == kUnkToken;
}

}  // namespace

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  for (const std::string& t : split_whitespace(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Vocab::Vocab() {
  for (std::string_view s : {kPadToken, kClsToken, kSepToken, kEosToken, kUnkToken}) add(std::string(s));
}

bool Vocab::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

int Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw DecodeError("token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(id_to_token_.size()));
  return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocab::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write vocabulary " + path.string());
  for (const std::string& t : id_to_token_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kNumSpecials) throw IngestionError("vocabulary too short: " + path.string());
  Vocab v;
  for (std::size_t i = 0; i < kNumSpecials; ++i)
    if (lines[i] != v.id_to_token_[i])
      throw IngestionError("vocabulary " + path.string() + ": line " + std::to_string(i + 1) +
                           " must be " + v.id_to_token_[i]);
  for (std::size_t i = kNumSpecials; i < lines.size(); ++i) {
    if (lines[i].empty() || v.contains(lines[i]))
      throw IngestionError("vocabulary " + path.string() + ": bad or duplicate token on line " +
                           std::to_string(i + 1));
    v.add(lines[i]);
  }
  return v;
}

Vocab build_vocab(std::span<const std::string> corpus, std::size_t max_size) {
  if (max_size < kNumSpecials + 1) throw ParameterError("build_vocab: max_size must be >= 6");
  std::map<std::string, std::size_t> counts;
  for (const std::string& text : corpus)
    for (std::string& t : split_whitespace(text))
      if (!is_special_literal(t)) ++counts[std::move(t)];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is lexicographic, so a stable sort on count keeps that order for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [token, count] : ranked) {
    if (v.size() >= max_size) break;
    v.add(token);
  }
  return v;
}

std::vector<int> encode(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 1) throw ParameterError("encode: max_len must be >= 1");
  std::vector<int> ids;
  for (const std::string& t : split_whitespace(text)) {
    if (t == kClsToken) ids.push_back(kCls);
    else if (t == kSepToken) ids.push_back(kSep);
    else if (t == kEosToken) ids.push_back(kEos);
    else ids.push_back(vocab.id(t));
  }
  if (ids.size() > max_len) {
    const bool had_eos = ids.back() == kEos;
    ids.resize(max_len);
    if (had_eos) ids.back() = kEos;
  }
  return ids;
}

std::string decode(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& t = vocab.token(id);
    if (id == kEos) break;
    if (id == kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace pex::tok
