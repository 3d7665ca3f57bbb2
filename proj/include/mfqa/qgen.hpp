#pragma once

// Question-answer pair generation from entity-tagged declarative sentences.
//
// Each entity span yields one question: the entity is replaced by an
// interrogative chosen by its type, either in place or moved to the front
// of the sentence, and the entity surface becomes the answer.

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfqa/error.hpp"
#include "mfqa/nertagger.hpp"
#include "mfqa/textcore.hpp"

namespace mfqa::qgen {

using ner::EntitySpan;
using ner::TaggedSentence;

enum class Placement { replace_in_situ, front };

struct Interrogative {
  std::string surface;
  Placement placement = Placement::replace_in_situ;

  bool operator==(const Interrogative&) const = default;
};

class InterrogativeMap {
 public:
  /// CAT defaults to the longer "product category" wording;
  /// "什么类别" is the short form, available as an override.
  static InterrogativeMap defaults() {
    InterrogativeMap m;
    m.entries_ = {
        {"PRO", {"什么属性", Placement::replace_in_situ}},
        {"CON", {"什么工况", Placement::front}},
        {"CAT", {"什么产品类别", Placement::replace_in_situ}},
        {"MAT", {"什么材料", Placement::replace_in_situ}},
        {"STA", {"什么阶段", Placement::replace_in_situ}},
        {"PAR", {"什么参数", Placement::front}},
    };
    return m;
  }

  const Interrogative& at(const std::string& type) const {
    auto it = entries_.find(type);
    if (it == entries_.end()) throw Error(Errc::unmapped_type, "no interrogative for type " + type);
    return it->second;
  }

  void set(const std::string& type, Interrogative entry) { entries_[type] = std::move(entry); }
  void erase(const std::string& type) { entries_.erase(type); }
  const std::map<std::string, Interrogative>& entries() const { return entries_; }

  /// Applies an override object keyed by type abbreviation. Values are a
  /// surface string or {"surface": s, "placement": "replace" | "front"}.
  void apply_overrides(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(Errc::validation, "interrogative overrides must be an object");
    for (const auto& [type, value] : j.items()) {
      if (!ner::is_entity_type(type)) throw Error(Errc::unmapped_type, "unknown entity type " + type);
      Interrogative entry = entries_.count(type) ? entries_.at(type) : Interrogative{};
      if (value.is_string()) {
        entry.surface = value.get<std::string>();
      } else {
        entry.surface = value.at("surface").get<std::string>();
        if (value.contains("placement")) {
          const auto p = value.at("placement").get<std::string>();
          if (p == "front") entry.placement = Placement::front;
          else if (p == "replace") entry.placement = Placement::replace_in_situ;
          else throw Error(Errc::validation, "unknown placement " + p);
        }
      }
      if (entry.surface.empty()) throw Error(Errc::validation, "empty interrogative for " + type);
      entries_[type] = std::move(entry);
    }
  }

  static InterrogativeMap load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open interrogative map: " + path);
    auto m = defaults();
    try {
      m.apply_overrides(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, path + ": " + e.what());
    }
    return m;
  }

 private:
  std::map<std::string, Interrogative> entries_;
};

inline const Interrogative& interrogative_for(const std::string& type, const InterrogativeMap& map) {
  return map.at(type);
}

struct SourceLocation {
  std::string doc;
  std::string section;
};

struct GeneratedPair {
  std::string question;
  std::string answer;
  std::string source_sentence;
  std::string entity_type;
  EntitySpan span;
  std::string origin = "generated";
  SourceLocation source;
};

inline nlohmann::json to_json(const GeneratedPair& p) {
  return {{"question", p.question},
          {"answer", p.answer},
          {"source_sentence", p.source_sentence},
          {"entity_type", p.entity_type},
          {"span", {{"start", p.span.start}, {"end", p.span.end}}},
          {"origin", p.origin},
          {"source", {{"doc", p.source.doc}, {"section", p.source.section}}}};
}

struct Candidate {
  TaggedSentence sentence;
  std::vector<EntitySpan> spans;
};

/// Keeps the sentences that carry at least one entity.
inline std::vector<Candidate> select_candidates(std::span<const TaggedSentence> corpus) {
  std::vector<Candidate> out;
  for (const auto& s : corpus) {
    auto spans = ner::extract_entities(s);
    if (!spans.empty()) out.push_back({s, std::move(spans)});
  }
  return out;
}

namespace detail {

inline bool is_terminal_mark(const std::string& tok) {
  return tok == "。" || tok == "?" || tok == "？";
}

}  // namespace detail

/// One pair per span. A trailing "。" or question mark becomes a single "?".
inline std::vector<GeneratedPair> generate_pairs(const TaggedSentence& sentence,
                                                 std::span<const EntitySpan> spans,
                                                 const InterrogativeMap& map,
                                                 const SourceLocation& source = {}) {
  const auto& toks = sentence.tokens;
  const std::string text = sentence.text();
  std::vector<GeneratedPair> out;
  for (const auto& span : spans) {
    if (span.start >= span.end || span.end > toks.size())
      throw Error(Errc::index, "entity span outside sentence");
    std::string surface;
    for (std::size_t t = span.start; t < span.end; ++t) surface += toks[t];
    const Interrogative& q = map.at(span.type);

    std::vector<std::string> words;
    if (q.placement == Placement::front) words.push_back(q.surface);
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (t == span.start && q.placement == Placement::replace_in_situ) words.push_back(q.surface);
      if (t >= span.start && t < span.end) continue;
      words.push_back(toks[t]);
    }
    while (!words.empty() && detail::is_terminal_mark(words.back())) words.pop_back();

    GeneratedPair p;
    for (const auto& w : words) p.question += w;
    p.question += "?";
    p.answer = surface;
    p.source_sentence = text;
    p.entity_type = span.type;
    p.span = span;
    p.span.surface = surface;
    p.source = source;
    out.push_back(std::move(p));
  }
  return out;
}

struct CorpusLine {
  std::string text;
  SourceLocation source;
};

/// One sentence per line, optionally "section<TAB>sentence".
inline std::vector<CorpusLine> load_corpus(const std::string& path, const std::string& doc = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open corpus: " + path);
  std::vector<CorpusLine> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    CorpusLine c;
    c.source.doc = doc;
    if (auto tab = line.find('\t'); tab != std::string::npos) {
      c.source.section = utf8::trim(line.substr(0, tab));
      c.text = utf8::trim(line.substr(tab + 1));
    } else {
      c.text = utf8::trim(line);
    }
    if (!c.text.empty()) out.push_back(std::move(c));
  }
  return out;
}

struct GenerationResult {
  std::vector<GeneratedPair> pairs;
  std::vector<std::string> warnings;
};

/// Tag, select and generate over a raw corpus. Sentences the tagger fails
/// on are skipped with a warning.
inline GenerationResult generate_corpus(std::span<const CorpusLine> corpus, const ner::Tagger& tagger,
                                        const InterrogativeMap& map) {
  GenerationResult result;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    try {
      auto tagged = tagger.tag(corpus[k].text);
      if (tagged.tokens.empty()) continue;
      auto spans = ner::extract_entities(tagged);
      for (auto& p : generate_pairs(tagged, spans, map, corpus[k].source))
        result.pairs.push_back(std::move(p));
    } catch (const Error& e) {
      result.warnings.push_back("sentence " + std::to_string(k + 1) + " skipped: " + e.what());
    }
  }
  return result;
}

inline void write_pairs_jsonl(const std::string& path, std::span<const GeneratedPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write pairs: " + path);
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

}  // namespace mfqa::qgen
