#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mfqa/qgen.hpp"

using namespace mfqa;
using namespace mfqa::qgen;

namespace {

const std::string kData = MFQA_TEST_DATA;

TaggedSentence chars_with_spans(const std::string& text,
                                std::vector<std::pair<std::string, std::string>> spans) {
  TaggedSentence s;
  s.tokens = utf8::split_chars(text);
  s.tags.assign(s.tokens.size(), "O");
  for (const auto& [surface, type] : spans) {
    const auto target = utf8::split_chars(surface);
    for (std::size_t i = 0; i + target.size() <= s.tokens.size(); ++i) {
      if (!std::equal(target.begin(), target.end(), s.tokens.begin() + static_cast<std::ptrdiff_t>(i)))
        continue;
      s.tags[i] = "B-" + type;
      for (std::size_t k = 1; k < target.size(); ++k) s.tags[i + k] = "I-" + type;
      break;
    }
  }
  return s;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

const ner::Tagger& memorized_tagger() {
  static const ner::Tagger tagger = [] {
    return ner::train_ner(ner::load_tagged_jsonl(kData + "/ner_fixture.jsonl"), ner::NerConfig{},
                          ner::NerTrainOptions{})
        .tagger;
  }();
  return tagger;
}

}  // namespace

TEST(Interrogatives, DefaultEntries) {
  const auto m = InterrogativeMap::defaults();
  EXPECT_EQ(interrogative_for("MAT", m), (Interrogative{"什么材料", Placement::replace_in_situ}));
  EXPECT_EQ(interrogative_for("CON", m), (Interrogative{"什么工况", Placement::front}));
  EXPECT_EQ(interrogative_for("PAR", m).placement, Placement::front);
  EXPECT_EQ(interrogative_for("CAT", m).surface, "什么产品类别");
  EXPECT_EQ(m.entries().size(), 6u);
}

TEST(Interrogatives, UnknownTypeIsUnmapped) {
  try {
    interrogative_for("XYZ", InterrogativeMap::defaults());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unmapped_type);
  }
}

TEST(Interrogatives, OverridesReplaceSurfaceAndPlacement) {
  auto m = InterrogativeMap::defaults();
  m.apply_overrides({{"CAT", "什么类别"}, {"MAT", {{"surface", "哪种材料"}, {"placement", "front"}}}});
  EXPECT_EQ(m.at("CAT"), (Interrogative{"什么类别", Placement::replace_in_situ}));
  EXPECT_EQ(m.at("MAT"), (Interrogative{"哪种材料", Placement::front}));
  EXPECT_THROW(m.apply_overrides({{"XYZ", "?"}}), Error);
}

TEST(Interrogatives, LoadFromFile) {
  const auto path = (std::filesystem::temp_directory_path() / "mfqa_interrogatives.json").string();
  std::ofstream(path) << R"({"STA": "哪个阶段"})";
  EXPECT_EQ(InterrogativeMap::load(path).at("STA").surface, "哪个阶段");
  std::filesystem::remove(path);
}

// ---------------------------------------------------------------------------

TEST(Generate, FlangeFullCategorySpan) {
  auto s = chars_with_spans("本规定不适用于对焊法兰的颈部过渡段", {{"对焊法兰", "CAT"}});
  auto pairs = generate_pairs(s, ner::extract_entities(s), InterrogativeMap::defaults());
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].question, "本规定不适用于什么产品类别的颈部过渡段?");
  EXPECT_EQ(pairs[0].answer, "对焊法兰");
  EXPECT_EQ(pairs[0].origin, "generated");
  EXPECT_EQ(pairs[0].entity_type, "CAT");
}

TEST(Generate, TwoCharacterTagsReplaceOnlyThoseCharacters) {
  auto s = chars_with_spans("本规定不适用于对焊法兰的颈部过渡段", {{"对焊", "CAT"}});
  auto pairs = generate_pairs(s, ner::extract_entities(s), InterrogativeMap::defaults());
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].question, "本规定不适用于什么产品类别法兰的颈部过渡段?");
  EXPECT_EQ(pairs[0].answer, "对焊");
}

TEST(Generate, FrontedParameter) {
  auto s = chars_with_spans("设计压力取1MPa。", {{"设计压力", "PAR"}});
  auto pairs = generate_pairs(s, ner::extract_entities(s), InterrogativeMap::defaults());
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].question, "什么参数取1MPa?");
  EXPECT_EQ(pairs[0].answer, "设计压力");
}

TEST(Generate, FrontingMidSentenceEntityLeavesNoParticle) {
  auto s = chars_with_spans("在低温工况下应进行热处理", {{"低温工况", "CON"}});
  auto pairs = generate_pairs(s, ner::extract_entities(s), InterrogativeMap::defaults());
  EXPECT_EQ(pairs[0].question, "什么工况在下应进行热处理?");
}

TEST(Generate, QuestionMarkWidthsNormalize) {
  for (const std::string end : {"？", "?", "。"}) {
    auto s = chars_with_spans("钢板厚度" + end, {{"钢板", "MAT"}});
    auto pairs = generate_pairs(s, ner::extract_entities(s), InterrogativeMap::defaults());
    EXPECT_EQ(pairs[0].question, "什么材料厚度?");
  }
}

TEST(Generate, OnePairPerSpanOthersVerbatim) {
  auto s = chars_with_spans("安全阀的排放面积按公式计算", {{"安全阀", "CAT"}, {"排放面积", "PRO"}});
  auto spans = ner::extract_entities(s);
  auto pairs = generate_pairs(s, spans, InterrogativeMap::defaults());
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].question, "什么产品类别的排放面积按公式计算?");
  EXPECT_EQ(pairs[1].question, "安全阀的什么属性按公式计算?");
  EXPECT_NE(pairs[0].span, pairs[1].span);
}

TEST(Generate, UnmappedTypeIsAnError) {
  auto s = chars_with_spans("钢板厚度", {{"钢板", "MAT"}});
  auto m = InterrogativeMap::defaults();
  m.erase("MAT");
  try {
    generate_pairs(s, ner::extract_entities(s), m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unmapped_type);
  }
}

TEST(Generate, WellFormednessOverEveryTypeAndPosition) {
  const auto m = InterrogativeMap::defaults();
  const std::string text = "甲乙丙丁戊己庚辛";
  const auto chars = utf8::split_chars(text);
  for (const auto& type : ner::entity_types()) {
    for (std::size_t start = 0; start < chars.size(); ++start) {
      for (std::size_t end = start + 1; end <= chars.size(); ++end) {
        TaggedSentence s{chars, std::vector<std::string>(chars.size(), "O")};
        s.tags[start] = "B-" + type;
        for (std::size_t t = start + 1; t < end; ++t) s.tags[t] = "I-" + type;
        auto spans = ner::extract_entities(s);
        auto pairs = generate_pairs(s, spans, m);
        ASSERT_EQ(pairs.size(), spans.size());
        const auto& p = pairs[0];
        ASSERT_EQ(count_occurrences(p.question, m.at(type).surface), 1u);
        ASSERT_EQ(p.question.find(p.answer), std::string::npos);
        ASSERT_EQ(p.question.back(), '?');
        std::string at_span;
        for (std::size_t t = p.span.start; t < p.span.end; ++t) at_span += chars[t];
        ASSERT_EQ(at_span, p.answer);
        ASSERT_NE(p.source_sentence.find(p.answer), std::string::npos);
      }
    }
  }
}

// ---------------------------------------------------------------------------

TEST(Candidates, KeepsOnlyEntityBearingSentencesOnce) {
  std::vector<TaggedSentence> corpus{
      chars_with_spans("本规定不适用于对焊法兰的颈部过渡段", {{"对焊", "CAT"}}),
      chars_with_spans("没有实体", {}),
      chars_with_spans("安全阀的排放面积按公式计算", {{"安全阀", "CAT"}, {"排放面积", "PRO"}}),
  };
  auto c = select_candidates(corpus);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].spans.size(), 1u);
  EXPECT_EQ(c[1].spans.size(), 2u);
}

TEST(Corpus, EmptyCorpusGivesNothing) {
  EXPECT_TRUE(generate_corpus(std::vector<CorpusLine>{}, memorized_tagger(), InterrogativeMap::defaults())
                  .pairs.empty());
}

TEST(Corpus, MemorizedTaggerReproducesFixtureQuestions) {
  std::vector<CorpusLine> corpus{{"本规定不适用于对焊法兰的颈部过渡段", {"GB150", "1.4"}},
                                 {"设计压力取1MPa。", {"GB150", "3.2"}}};
  auto r = generate_corpus(corpus, memorized_tagger(), InterrogativeMap::defaults());
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0].question, "本规定不适用于什么产品类别法兰的颈部过渡段?");
  EXPECT_EQ(r.pairs[0].answer, "对焊");
  EXPECT_EQ(r.pairs[0].source.section, "1.4");
  EXPECT_EQ(r.pairs[1].question, "什么参数取1MPa?");
  EXPECT_EQ(r.pairs[1].answer, "设计压力");
  for (const auto& p : r.pairs) {
    bool found = false;
    for (const auto& line : corpus) found = found || line.text == p.source_sentence;
    EXPECT_TRUE(found);
  }
}

TEST(Corpus, DeterministicOutputFile) {
  std::vector<CorpusLine> corpus{{"安全阀的排放面积按公式计算", {}}, {"容器壳体采用Q345R制造", {}}};
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = (dir / "mfqa_gen_a.jsonl").string(), b = (dir / "mfqa_gen_b.jsonl").string();
  write_pairs_jsonl(a, generate_corpus(corpus, memorized_tagger(), InterrogativeMap::defaults()).pairs);
  write_pairs_jsonl(b, generate_corpus(corpus, memorized_tagger(), InterrogativeMap::defaults()).pairs);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_FALSE(slurp(a).empty());
  EXPECT_EQ(slurp(a), slurp(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Corpus, LoadSplitsSectionPrefix) {
  const auto path = (std::filesystem::temp_directory_path() / "mfqa_corpus.txt").string();
  std::ofstream(path) << "E.6.3\t安全阀的排放面积按公式计算\n\n设计压力取1MPa。\r\n";
  auto c = load_corpus(path, "JB4732");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].source.section, "E.6.3");
  EXPECT_EQ(c[0].source.doc, "JB4732");
  EXPECT_EQ(c[1].text, "设计压力取1MPa。");
  std::filesystem::remove(path);
}
