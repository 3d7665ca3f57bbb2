#pragma once

// Sentence segmentation, vocabulary construction and integer encoding.
//
// Text is treated as UTF-8. Two segmentation modes are built in: forward
// maximum matching against a lexicon, and one token per character. Both
// drop whitespace and keep punctuation as single-character tokens.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mfqa/error.hpp"

namespace mfqa {

using json = nlohmann::json;

namespace utf8 {

/// Byte length of the code point starting with lead byte `c`; invalid
/// lead bytes count as one byte so malformed input still advances.
inline std::size_t sequence_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

/// Splits text into code point substrings.
inline std::vector<std::string> split_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = std::min(sequence_length(static_cast<unsigned char>(text[pos])),
                               text.size() - pos);
    out.emplace_back(text.substr(pos, len));
    pos += len;
  }
  return out;
}

/// ASCII whitespace, NBSP and the ideographic space.
inline bool is_space(std::string_view ch) {
  if (ch.size() == 1) {
    return ch[0] == ' ' || ch[0] == '\t' || ch[0] == '\n' || ch[0] == '\r' ||
           ch[0] == '\f' || ch[0] == '\v';
  }
  return ch == "\xC2\xA0" || ch == "\xE3\x80\x80";
}

inline std::size_t length(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < text.size(); ++n)
    pos += sequence_length(static_cast<unsigned char>(text[pos]));
  return n;
}

inline std::string strip_spaces(std::string_view text) {
  std::string out;
  for (const auto& ch : split_chars(text))
    if (!is_space(ch)) out += ch;
  return out;
}

inline std::string trim(std::string_view text) {
  auto chars = split_chars(text);
  std::size_t b = 0, e = chars.size();
  while (b < e && is_space(chars[b])) ++b;
  while (e > b && is_space(chars[e - 1])) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) out += chars[i];
  return out;
}

}  // namespace utf8

enum class SegmentMode { max_match, character };

struct SegmenterConfig {
  SegmentMode mode = SegmentMode::character;
  std::unordered_set<std::string> lexicon;
  /// Longest lexicon entry in code points; recomputed by add_word.
  std::size_t max_word_chars = 0;

  void add_word(const std::string& word) {
    if (word.empty()) return;
    lexicon.insert(word);
    max_word_chars = std::max(max_word_chars, utf8::length(word));
  }

  static SegmenterConfig character() { return {}; }

  static SegmenterConfig max_match(std::span<const std::string> words) {
    SegmenterConfig cfg;
    cfg.mode = SegmentMode::max_match;
    for (const auto& w : words) cfg.add_word(w);
    return cfg;
  }

  json to_json() const {
    std::vector<std::string> words(lexicon.begin(), lexicon.end());
    std::sort(words.begin(), words.end());
    return {{"mode", mode == SegmentMode::max_match ? "max_match" : "character"},
            {"lexicon", words}};
  }

  static SegmenterConfig from_json(const json& j) {
    SegmenterConfig cfg;
    const std::string mode = j.value("mode", std::string("character"));
    if (mode == "max_match") {
      cfg.mode = SegmentMode::max_match;
    } else if (mode != "character") {
      throw Error(Errc::config, "unknown segmenter mode: " + mode);
    }
    if (j.contains("lexicon"))
      for (const auto& w : j.at("lexicon")) cfg.add_word(w.get<std::string>());
    return cfg;
  }
};

/// Reads a UTF-8 lexicon, one word per line; blank lines are ignored.
inline std::vector<std::string> load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open lexicon: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = utf8::trim(line);
    if (!w.empty()) words.push_back(std::move(w));
  }
  return words;
}

inline std::vector<std::string> segment(std::string_view text, const SegmenterConfig& cfg) {
  std::vector<std::string> chars;
  for (auto& ch : utf8::split_chars(text)) chars.push_back(std::move(ch));

  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < chars.size()) {
    if (utf8::is_space(chars[i])) {
      ++i;
      continue;
    }
    std::size_t take = 1;
    if (cfg.mode == SegmentMode::max_match && cfg.max_word_chars > 1) {
      // Longest lexicon word starting at i; whitespace never joins a word.
      std::string candidate = chars[i];
      for (std::size_t k = 1; k < cfg.max_word_chars && i + k < chars.size(); ++k) {
        if (utf8::is_space(chars[i + k])) break;
        candidate += chars[i + k];
        if (cfg.lexicon.count(candidate)) take = k + 1;
      }
    }
    std::string tok;
    for (std::size_t k = 0; k < take; ++k) tok += chars[i + k];
    tokens.push_back(std::move(tok));
    i += take;
  }
  return tokens;
}

using TokenId = std::int32_t;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() : tokens_{kPadToken, kUnkToken} {}

  /// Content tokens in id order (ids start at 2).
  Vocabulary(std::vector<std::string> content, int min_count) : Vocabulary() {
    min_count_ = min_count;
    for (auto& t : content) add(std::move(t));
  }

  std::size_t size() const { return tokens_.size(); }
  int min_count() const { return min_count_; }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw Error(Errc::index, "token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::span<const std::string> content_tokens() const {
    return std::span<const std::string>(tokens_).subspan(2);
  }

  json to_json() const {
    return {{"tokens", std::vector<std::string>(content_tokens().begin(), content_tokens().end())},
            {"min_count", min_count_}};
  }

  static Vocabulary from_json(const json& j) {
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>(),
                      j.value("min_count", 1));
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write vocabulary: " + path);
    out << to_json().dump() << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open vocabulary: " + path);
    try {
      return from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw Error(Errc::parse, "bad vocabulary file " + path + ": " + e.what());
    }
  }

 private:
  void add(std::string token) {
    if (index_.count(token) || token == kPadToken || token == kUnkToken) return;
    index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  int min_count_ = 1;
};

/// Keeps tokens seen at least `min_count` times, ordered by descending
/// count and then bytewise.
inline Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, int min_count) {
  if (min_count < 1) throw Error(Errc::validation, "min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) ++counts[tok];
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> content;
  content.reserve(kept.size());
  for (auto& [tok, n] : kept) content.push_back(tok);
  return Vocabulary(std::move(content), min_count);
}

struct Encoded {
  std::vector<TokenId> ids;  ///< exactly max_len entries
  std::size_t length = 0;    ///< unpadded length
};

inline Encoded encode(std::span<const std::string> tokens, const Vocabulary& vocab,
                      std::size_t max_len) {
  if (max_len < 1) throw Error(Errc::validation, "max_len must be >= 1");
  Encoded out;
  out.length = std::min(tokens.size(), max_len);
  out.ids.assign(max_len, Vocabulary::kPad);
  for (std::size_t i = 0; i < out.length; ++i) out.ids[i] = vocab.id(tokens[i]);
  return out;
}

/// Maps the unpadded prefix back to surface strings; unknowns come back as
/// the UNK marker.
inline std::vector<std::string> decode(std::span<const TokenId> ids, std::size_t length,
                                       const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(length);
  for (std::size_t i = 0; i < length && i < ids.size(); ++i) out.push_back(vocab.token(ids[i]));
  return out;
}

struct TokenizedSentence {
  std::vector<std::string> tokens;
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

/// Segmenter plus vocabulary: the text front end every model shares.
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(SegmenterConfig segmenter, Vocabulary vocab)
      : segmenter_(std::move(segmenter)), vocab_(std::move(vocab)) {}

  const SegmenterConfig& segmenter() const { return segmenter_; }
  const Vocabulary& vocab() const { return vocab_; }

  std::vector<std::string> segment(std::string_view text) const {
    return mfqa::segment(text, segmenter_);
  }

  TokenizedSentence tokenize(std::string_view text) const {
    return from_tokens(segment(text));
  }

  TokenizedSentence from_tokens(std::vector<std::string> tokens) const {
    TokenizedSentence s;
    s.ids.reserve(tokens.size());
    for (const auto& t : tokens) s.ids.push_back(vocab_.id(t));
    s.tokens = std::move(tokens);
    return s;
  }

  json to_json() const {
    return {{"segmenter", segmenter_.to_json()}, {"vocab", vocab_.to_json()}};
  }

  static Tokenizer from_json(const json& j) {
    return Tokenizer(SegmenterConfig::from_json(j.at("segmenter")),
                     Vocabulary::from_json(j.at("vocab")));
  }

 private:
  SegmenterConfig segmenter_;
  Vocabulary vocab_;
};

}  // namespace mfqa
