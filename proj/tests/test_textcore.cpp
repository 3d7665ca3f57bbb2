#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mfqa/textcore.hpp"

using namespace mfqa;

namespace {

using Tokens = std::vector<std::string>;

// Forward maximum matching written the slow way: at each position try
// every substring length from the longest down.
Tokens max_match_oracle(const std::string& text, const std::vector<std::string>& lexicon) {
  auto chars = utf8::split_chars(text);
  Tokens out;
  std::size_t i = 0;
  while (i < chars.size()) {
    std::size_t take = 1;
    for (std::size_t len = chars.size() - i; len > 1; --len) {
      std::string cand;
      for (std::size_t k = 0; k < len; ++k) cand += chars[i + k];
      if (std::find(lexicon.begin(), lexicon.end(), cand) != lexicon.end()) {
        take = len;
        break;
      }
    }
    std::string tok;
    for (std::size_t k = 0; k < take; ++k) tok += chars[i + k];
    out.push_back(tok);
    i += take;
  }
  return out;
}

}  // namespace

TEST(Segment, LexiconMaxMatchSplitsStandardQuestion) {
  const std::vector<std::string> lex{"标准", "适用", "最大", "多少", "压力"};
  auto cfg = SegmenterConfig::max_match(lex);
  EXPECT_EQ(segment("标准适用最大多少压力", cfg), (Tokens{"标准", "适用", "最大", "多少", "压力"}));
}

TEST(Segment, EmptyTextGivesNoTokens) {
  EXPECT_TRUE(segment("", SegmenterConfig::character()).empty());
  EXPECT_TRUE(segment("", SegmenterConfig::max_match(std::vector<std::string>{"标准"})).empty());
}

TEST(Segment, ModesDifferOnTheSameInput) {
  const std::vector<std::string> lex{"标准", "适用"};
  EXPECT_EQ(segment("标准适用", SegmenterConfig::max_match(lex)), (Tokens{"标准", "适用"}));
  EXPECT_EQ(segment("标准适用", SegmenterConfig::character()), (Tokens{"标", "准", "适", "用"}));
}

TEST(Segment, MaxMatchAgreesWithSlowOracle) {
  const std::vector<std::string> lex{"安全阀", "安全", "排放", "排放面积", "面积", "计算", "如何"};
  auto cfg = SegmenterConfig::max_match(lex);
  for (const std::string s : {"安全阀的排放面积如何计算?", "排放安全面积阀", "计算如何如何", "无词"}) {
    EXPECT_EQ(segment(s, cfg), max_match_oracle(s, lex)) << s;
  }
}

TEST(Segment, PunctuationStaysAsSingleTokens) {
  const std::vector<std::string> lex{"压力"};
  EXPECT_EQ(segment("压力？", SegmenterConfig::max_match(lex)), (Tokens{"压力", "？"}));
  EXPECT_EQ(segment("a,b", SegmenterConfig::character()), (Tokens{"a", ",", "b"}));
}

TEST(Segment, WhitespaceNeverJoinsALexiconWord) {
  const std::vector<std::string> lex{"标准"};
  EXPECT_EQ(segment("标 准", SegmenterConfig::max_match(lex)), (Tokens{"标", "准"}));
}

TEST(Segment, CharacterModeJoinEqualsInputWithoutWhitespace) {
  std::mt19937 rng(11);
  const std::vector<std::string> alphabet{"标", "准", " ", "a", "Z", "。", "\t", "？", "压", "\xE3\x80\x80", "1"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const int n = static_cast<int>(rng() % 20);
    for (int k = 0; k < n; ++k) s += alphabet[rng() % alphabet.size()];
    std::string joined;
    for (const auto& t : segment(s, SegmenterConfig::character())) joined += t;
    ASSERT_EQ(joined, utf8::strip_spaces(s));
  }
}

TEST(Vocab, OrdersByCountThenLexicographically) {
  std::vector<Tokens> corpus{{"a", "b"}, {"b", "c"}};
  auto v = build_vocab(corpus, 1);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token(0), Vocabulary::kPadToken);
  EXPECT_EQ(v.token(1), Vocabulary::kUnkToken);
  EXPECT_EQ(v.token(2), "b");
  EXPECT_EQ(v.token(3), "a");
  EXPECT_EQ(v.token(4), "c");
}

TEST(Vocab, MinCountFilters) {
  std::vector<Tokens> corpus{{"a", "b"}, {"b", "c"}};
  auto v = build_vocab(corpus, 2);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.token(2), "b");
  EXPECT_EQ(v.id("a"), Vocabulary::kUnk);
}

TEST(Vocab, EmptyCorpusHasOnlyReservedIds) {
  auto v = build_vocab(std::vector<Tokens>{}, 1);
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.id("anything"), Vocabulary::kUnk);
}

TEST(Vocab, RejectsZeroMinCount) {
  EXPECT_THROW(build_vocab(std::vector<Tokens>{}, 0), Error);
}

TEST(Vocab, DeterministicAcrossBuilds) {
  std::vector<Tokens> corpus{{"x", "y", "z"}, {"z", "y"}, {"q"}};
  auto a = build_vocab(corpus, 1), b = build_vocab(corpus, 1);
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Vocab, FileRoundTrip) {
  std::vector<Tokens> corpus{{"标", "准"}, {"准"}};
  auto v = build_vocab(corpus, 1);
  auto path = (std::filesystem::temp_directory_path() / "mfqa_vocab_test.json").string();
  v.save(path);
  auto back = Vocabulary::load(path);
  EXPECT_EQ(back.to_json(), v.to_json());
  EXPECT_EQ(v.to_json()["tokens"], (nlohmann::json{"准", "标"}));
  std::filesystem::remove(path);
}

TEST(Encode, PadsShortSequences) {
  auto v = build_vocab(std::vector<Tokens>{{"a", "b"}, {"b", "c"}}, 1);
  auto e = encode(Tokens{"b"}, v, 3);
  EXPECT_EQ(e.ids, (std::vector<TokenId>{v.id("b"), Vocabulary::kPad, Vocabulary::kPad}));
  EXPECT_EQ(e.length, 1u);
}

TEST(Encode, UnknownBecomesUnk) {
  auto v = build_vocab(std::vector<Tokens>{{"a"}}, 1);
  auto e = encode(Tokens{"z"}, v, 1);
  EXPECT_EQ(e.ids, std::vector<TokenId>{Vocabulary::kUnk});
  EXPECT_EQ(e.length, 1u);
}

TEST(Encode, TruncatesLongSequences) {
  auto v = build_vocab(std::vector<Tokens>{{"a", "b", "c", "d", "e"}}, 1);
  auto e = encode(Tokens{"a", "b", "c", "d", "e"}, v, 3);
  EXPECT_EQ(e.ids, (std::vector<TokenId>{v.id("a"), v.id("b"), v.id("c")}));
  EXPECT_EQ(e.length, 3u);
}

TEST(Encode, RejectsZeroMaxLen) {
  Vocabulary v;
  EXPECT_THROW(encode(Tokens{"a"}, v, 0), Error);
}

TEST(Encode, DecodeRoundTripReplacesUnknowns) {
  std::mt19937 rng(3);
  const Tokens pool{"p", "q", "r", "s", "t", "u"};
  auto v = build_vocab(std::vector<Tokens>{{"p", "q", "r"}}, 1);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens toks;
    const std::size_t n = 1 + rng() % 8;
    for (std::size_t k = 0; k < n; ++k) toks.push_back(pool[rng() % pool.size()]);
    auto e = encode(toks, v, 10);
    auto back = decode(e.ids, e.length, v);
    ASSERT_EQ(back.size(), toks.size());
    for (std::size_t k = 0; k < toks.size(); ++k)
      EXPECT_EQ(back[k], v.contains(toks[k]) ? toks[k] : std::string(Vocabulary::kUnkToken));
  }
}

TEST(TokenizedSentence, IdsAlignWithTokensAndStayInVocabulary) {
  auto v = build_vocab(std::vector<Tokens>{{"标", "准"}}, 1);
  Tokenizer tok(SegmenterConfig::character(), v);
  auto s = tok.tokenize("标准适用");
  ASSERT_EQ(s.tokens.size(), s.ids.size());
  for (auto id : s.ids) EXPECT_LT(static_cast<std::size_t>(id), v.size());
  EXPECT_EQ(s.ids[2], Vocabulary::kUnk);
}

TEST(Tokenizer, JsonRoundTripKeepsSegmenterAndVocab) {
  const std::vector<std::string> lex{"标准", "压力"};
  Tokenizer tok(SegmenterConfig::max_match(lex), build_vocab(std::vector<Tokens>{{"标准", "压力"}}, 1));
  auto back = Tokenizer::from_json(tok.to_json());
  EXPECT_EQ(back.segment("标准压力"), (Tokens{"标准", "压力"}));
  EXPECT_EQ(back.vocab().to_json(), tok.vocab().to_json());
}
