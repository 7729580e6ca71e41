// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pex::tok {

inline constexpr int kPad = 0;
inline constexpr int kCls = 1;
inline constexpr int kSep = 2;
inline constexpr int kEos = 3;
inline constexpr int kUnk = 4;
inline constexpr int kNumSpecials = 5;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kEosToken = "[EOS]";
inline constexpr std::string_view kUnkToken = "[UNK]";

/// Splits on runs of ASCII whitespace.
std::vector<std::string> split_whitespace(std::string_view text);
/// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Bijective token <-> id table. Ids 0..4 are always PAD, CLS, SEP, EOS, UNK.
class Vocab {
 public:
  Vocab();

  std::size_t size() const { return id_to_token_.size(); }
  bool contains(std::string_view token) const;
  /// UNK id for unknown tokens.
  int id(std::string_view token) const;
  const std::string& token(int id) const;

  /// Appends a token if absent; returns its id.
  int add(const std::string& token);

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.id_to_token_ == b.id_to_token_;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Frequency-ranked whitespace vocabulary; ties broken lexicographically.
/// `max_size` counts the five specials and must be at least 6.
Vocab build_vocab(std::span<const std::string> corpus, std::size_t max_size);

/// Text <-> id mapping used by the models. External pre-trained tokenizers
/// plug in by implementing this interface.
class TextCodec {
 public:
  virtual ~TextCodec() = default;
  virtual std::vector<int> encode(std::string_view text, std::size_t max_len) const = 0;
  virtual std::string decode(std::span<const int> ids) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

/// Whitespace split; literal [CLS]/[SEP]/[EOS] map to their special ids;
/// out-of-vocabulary tokens map to UNK. Over-long input is cut from the
/// right, keeping a trailing EOS if the text had one.
std::vector<int> encode(std::string_view text, const Vocab& vocab, std::size_t max_len);

/// Drops PAD, stops at the first EOS; throws DecodeError on unknown ids.
std::string decode(std::span<const int> ids, const Vocab& vocab);

class WhitespaceCodec final : public TextCodec {
 public:
  explicit WhitespaceCodec(Vocab vocab) : vocab_(std::move(vocab)) {}
  std::vector<int> encode(std::string_view text, std::size_t max_len) const override {
    return tok::encode(text, vocab_, max_len);
  }
  std::string decode(std::span<const int> ids) const override { return tok::decode(ids, vocab_); }
  std::size_t vocab_size() const override { return vocab_.size(); }
  const Vocab& vocab() const { return vocab_; }

 private:
  Vocab vocab_;
};

}  // namespace pex::tok
