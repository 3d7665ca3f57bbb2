#pragma once

// Synthetic datasets shared by the unit and acceptance tests. Tokens are
// single CJK code points starting at U+4E00 so character segmentation
// recovers them exactly.

#include <string>
#include <vector>

#include "mfqa/simnet.hpp"

namespace fixtures {

inline std::string glyph(std::size_t k) {
  const auto cp = static_cast<char32_t>(0x4E00 + k);
  std::string s;
  s += static_cast<char>(0xE0 | (cp >> 12));
  s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
  s += static_cast<char>(0x80 | (cp & 0x3F));
  return s;
}

inline std::string sentence(const std::vector<std::size_t>& tokens) {
  std::string s;
  for (auto t : tokens) s += glyph(t);
  return s;
}

/// 40 pairs, alternating labels. Positives keep 4 of 5 tokens in place;
/// negatives draw from a disjoint token range.
inline std::vector<mfqa::sim::RawPair> memorization_pairs() {
  mfqa::nn::Rng rng(40);
  std::vector<mfqa::sim::RawPair> out;
  for (std::size_t k = 0; k < 40; ++k) {
    std::vector<std::size_t> a(5);
    for (auto& t : a) t = rng.below(30);
    std::vector<std::size_t> b;
    int label = 0;
    if (k % 2 == 0) {
      b = a;
      b[rng.below(5)] = rng.below(30);
      label = 1;
    } else {
      b.resize(5);
      for (auto& t : b) t = 30 + rng.below(30);
    }
    out.push_back({sentence(a), sentence(b), label});
  }
  return out;
}

/// Paraphrase set. Concepts each have two surface forms and are grouped
/// into topics; a sentence draws its concepts from one topic. Positives
/// restate the same concepts with fresh surface choices and one adjacent
/// swap. Negatives get the same treatment after `changes` draws of a
/// position (with repetition, so some concepts usually survive) are
/// replaced by concepts from another topic.
struct ParaphraseShape {
  std::size_t concepts = 48;
  std::size_t topics = 4;
  std::size_t min_len = 4;
  std::size_t extra_len = 4;
  std::size_t min_changes = 7;
  std::size_t extra_changes = 1;
};

inline std::vector<mfqa::sim::RawPair> paraphrase_pairs(std::size_t n, std::uint64_t seed,
                                                        const ParaphraseShape& shape = {}) {
  mfqa::nn::Rng rng(seed);
  const std::size_t per_topic = shape.concepts / shape.topics;
  auto render = [&](const std::vector<std::size_t>& concepts) {
    std::vector<std::size_t> toks;
    for (auto c : concepts) toks.push_back(2 * c + rng.below(2));
    return toks;
  };
  std::vector<mfqa::sim::RawPair> out;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t len = shape.min_len + rng.below(shape.extra_len);
    const std::size_t topic = rng.below(shape.topics);
    std::vector<std::size_t> concepts(len);
    for (auto& c : concepts) c = topic * per_topic + rng.below(per_topic);
    auto other = concepts;
    const int label = k % 2 == 0 ? 1 : 0;
    if (label == 0) {
      const std::size_t changes = std::min(len, shape.min_changes + rng.below(shape.extra_changes));
      for (std::size_t draw = 0; draw < changes; ++draw) {
        const std::size_t pos = rng.below(len);
        const std::size_t t =
            shape.topics > 1 ? (topic + 1 + rng.below(shape.topics - 1)) % shape.topics : topic;
        std::size_t c;
        do c = t * per_topic + rng.below(per_topic);
        while (c == other[pos]);
        other[pos] = c;
      }
    }
    const std::size_t swap_at = rng.below(len - 1);
    std::swap(other[swap_at], other[swap_at + 1]);
    out.push_back({sentence(render(concepts)), sentence(render(other)), label});
  }
  return out;
}

inline mfqa::Tokenizer char_tokenizer(const std::vector<mfqa::sim::RawPair>& pairs) {
  mfqa::Tokenizer base(mfqa::SegmenterConfig::character(), mfqa::Vocabulary());
  std::vector<std::vector<std::string>> corpus;
  for (const auto& p : pairs) {
    corpus.push_back(base.segment(p.q1));
    corpus.push_back(base.segment(p.q2));
  }
  return mfqa::Tokenizer(mfqa::SegmenterConfig::character(), mfqa::build_vocab(corpus, 1));
}

/// Similarity model trained with default options on the template
/// paraphrase pairs, vocabulary built from the same file.
inline mfqa::sim::LoadedSimModel domain_model(const std::string& pairs_path, std::size_t dim = 8) {
  const auto raw = mfqa::sim::load_pairs_jsonl(pairs_path);
  mfqa::sim::LoadedSimModel out;
  out.tokenizer = char_tokenizer(raw);
  mfqa::sim::SimModelConfig cfg;
  cfg.vocab_size = out.tokenizer.vocab().size();
  cfg.embed_dim = dim;
  cfg.hidden_dim = dim;
  out.model = mfqa::sim::train_sim(mfqa::sim::to_examples(raw, out.tokenizer), cfg, {}).model;
  return out;
}

}  // namespace fixtures
