#pragma once

// Character-level BiLSTM-CRF entity tagger over the BIO scheme.
//
// Emissions come from a trainable embedding, a BiLSTM and a linear
// projection to tag scores. A linear-chain CRF (transition, start and end
// scores) is trained by negative log-likelihood; decoding is Viterbi with
// optional BIO constraints applied at decode time only.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mfqa/error.hpp"
#include "mfqa/nn/checkpoint.hpp"
#include "mfqa/nn/layers.hpp"
#include "mfqa/nn/optim.hpp"
#include "mfqa/nn/tensor.hpp"
#include "mfqa/textcore.hpp"

namespace mfqa::ner {

using nn::Parameter;
using nn::ParamList;
using nn::Tensor;

inline const std::array<std::string, 6>& entity_types() {
  static const std::array<std::string, 6> types{"PRO", "CON", "CAT", "MAT", "STA", "PAR"};
  return types;
}

inline bool is_entity_type(const std::string& t) {
  const auto& ts = entity_types();
  return std::find(ts.begin(), ts.end(), t) != ts.end();
}

/// Ordered tag inventory. Tag strings are "O", "B-X" or "I-X".
class TagSet {
 public:
  explicit TagSet(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t k = 0; k < names_.size(); ++k) {
      const auto& n = names_[k];
      if (n != "O" && !(n.size() > 2 && (n[0] == 'B' || n[0] == 'I') && n[1] == '-'))
        throw Error(Errc::validation, "malformed tag: " + n);
      if (!index_.emplace(n, static_cast<int>(k)).second)
        throw Error(Errc::validation, "duplicate tag: " + n);
    }
  }

  /// O followed by B-/I- for PRO, CON, CAT, MAT, STA, PAR: 13 tags.
  static const TagSet& standard() {
    static const TagSet set = [] {
      std::vector<std::string> names{"O"};
      for (const auto& t : entity_types()) {
        names.push_back("B-" + t);
        names.push_back("I-" + t);
      }
      return TagSet(std::move(names));
    }();
    return set;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(int idx) const { return names_.at(static_cast<std::size_t>(idx)); }
  const std::vector<std::string>& names() const { return names_; }

  int index(const std::string& tag) const {
    auto it = index_.find(tag);
    if (it == index_.end()) throw Error(Errc::index, "unknown tag: " + tag);
    return it->second;
  }

  bool contains(const std::string& tag) const { return index_.count(tag) > 0; }

  char kind(int idx) const { return name(idx)[0]; }
  std::string type(int idx) const {
    const auto& n = name(idx);
    return n == "O" ? std::string() : n.substr(2);
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Linear-chain CRF

struct CrfParams {
  Parameter transitions;  ///< T x T, score of tag[t-1] -> tag[t]
  Parameter start;        ///< T
  Parameter end;          ///< T

  CrfParams() = default;
  explicit CrfParams(std::size_t num_tags)
      : transitions("crf.transitions", {num_tags, num_tags}),
        start("crf.start", {num_tags}),
        end("crf.end", {num_tags}) {}

  std::size_t num_tags() const { return start.value.size(); }

  void append_params(ParamList& out) {
    out.push_back(&transitions);
    out.push_back(&start);
    out.push_back(&end);
  }
};

inline double crf_gold_score(const Tensor& emissions, std::span<const int> tags,
                             const CrfParams& crf) {
  const std::size_t L = emissions.rows(), T = crf.num_tags();
  if (L == 0) throw Error(Errc::empty_sequence, "crf_gold_score on empty sequence");
  if (tags.size() != L) throw Error(Errc::shape, "tag sequence length mismatch");
  for (int y : tags)
    if (y < 0 || static_cast<std::size_t>(y) >= T) throw Error(Errc::index, "tag index out of range");
  const auto& tr = crf.transitions.value;
  double s = crf.start.value[tags[0]] + crf.end.value[tags[L - 1]];
  for (std::size_t t = 0; t < L; ++t) s += emissions(t, tags[t]);
  for (std::size_t t = 1; t < L; ++t) s += tr(tags[t - 1], tags[t]);
  return s;
}

namespace detail {

inline double logsumexp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// alpha(t, y): log-sum of scores of prefixes ending in y at t (emission included).
inline Tensor forward_table(const Tensor& em, const CrfParams& crf) {
  const std::size_t L = em.rows(), T = crf.num_tags();
  Tensor alpha = Tensor::matrix(L, T);
  for (std::size_t y = 0; y < T; ++y) alpha(0, y) = crf.start.value[y] + em(0, y);
  std::vector<double> buf(T);
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t y = 0; y < T; ++y) {
      for (std::size_t p = 0; p < T; ++p) buf[p] = alpha(t - 1, p) + crf.transitions.value(p, y);
      alpha(t, y) = logsumexp(buf) + em(t, y);
    }
  }
  return alpha;
}

/// beta(t, y): log-sum of scores of suffixes after t given y at t (end included).
inline Tensor backward_table(const Tensor& em, const CrfParams& crf) {
  const std::size_t L = em.rows(), T = crf.num_tags();
  Tensor beta = Tensor::matrix(L, T);
  for (std::size_t y = 0; y < T; ++y) beta(L - 1, y) = crf.end.value[y];
  std::vector<double> buf(T);
  for (std::size_t t = L - 1; t-- > 0;) {
    for (std::size_t y = 0; y < T; ++y) {
      for (std::size_t n = 0; n < T; ++n)
        buf[n] = crf.transitions.value(y, n) + em(t + 1, n) + beta(t + 1, n);
      beta(t, y) = logsumexp(buf);
    }
  }
  return beta;
}

}  // namespace detail

/// log of the sum over all T^L tag paths of exp(path score).
inline double crf_log_partition(const Tensor& emissions, const CrfParams& crf) {
  const std::size_t L = emissions.rows(), T = crf.num_tags();
  if (L == 0) throw Error(Errc::empty_sequence, "crf_log_partition on empty sequence");
  if (emissions.cols() != T) throw Error(Errc::shape, "emission width != tag count");
  Tensor alpha = detail::forward_table(emissions, crf);
  std::vector<double> last(T);
  for (std::size_t y = 0; y < T; ++y) last[y] = alpha(L - 1, y) + crf.end.value[y];
  return detail::logsumexp(last);
}

/// log Z - gold score. Accumulates CRF parameter grads and returns
/// d nll / d emissions through `d_emissions` (L x T).
inline double crf_nll_backward(const Tensor& emissions, std::span<const int> gold, CrfParams& crf,
                               Tensor& d_emissions, double weight = 1.0) {
  const std::size_t L = emissions.rows(), T = crf.num_tags();
  const double gold_score = crf_gold_score(emissions, gold, crf);
  Tensor alpha = detail::forward_table(emissions, crf);
  Tensor beta = detail::backward_table(emissions, crf);
  std::vector<double> last(T);
  for (std::size_t y = 0; y < T; ++y) last[y] = alpha(L - 1, y) + crf.end.value[y];
  const double logz = detail::logsumexp(last);

  d_emissions = Tensor::matrix(L, T);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t y = 0; y < T; ++y) {
      const double marginal = std::exp(alpha(t, y) + beta(t, y) - logz);
      d_emissions(t, y) = weight * marginal;
      if (t == 0) crf.start.grad[y] += weight * marginal;
      if (t == L - 1) crf.end.grad[y] += weight * marginal;
    }
  }
  for (std::size_t t = 1; t < L; ++t)
    for (std::size_t p = 0; p < T; ++p)
      for (std::size_t y = 0; y < T; ++y) {
        const double pair = std::exp(alpha(t - 1, p) + crf.transitions.value(p, y) + emissions(t, y) +
                                     beta(t, y) - logz);
        crf.transitions.grad(p, y) += weight * pair;
      }

  for (std::size_t t = 0; t < L; ++t) d_emissions(t, gold[t]) -= weight;
  crf.start.grad[gold[0]] -= weight;
  crf.end.grad[gold[L - 1]] -= weight;
  for (std::size_t t = 1; t < L; ++t) crf.transitions.grad(gold[t - 1], gold[t]) -= weight;
  return logz - gold_score;
}

/// Decode-time BIO restrictions: I-X may only follow B-X or I-X, and no
/// path may start with I-X.
struct BioConstraints {
  std::vector<bool> allowed_start;             ///< T
  std::vector<std::vector<bool>> allowed_next;  ///< [prev][next]

  static BioConstraints from(const TagSet& tags) {
    const std::size_t T = tags.size();
    BioConstraints c;
    c.allowed_start.assign(T, true);
    c.allowed_next.assign(T, std::vector<bool>(T, true));
    for (std::size_t y = 0; y < T; ++y) {
      if (tags.kind(static_cast<int>(y)) != 'I') continue;
      c.allowed_start[y] = false;
      const std::string type = tags.type(static_cast<int>(y));
      for (std::size_t p = 0; p < T; ++p) {
        const int pi = static_cast<int>(p);
        c.allowed_next[p][y] = tags.kind(pi) != 'O' && tags.type(pi) == type;
      }
    }
    return c;
  }
};

struct Decoded {
  std::vector<int> tags;
  double score = 0.0;
};

/// Highest-scoring path; ties resolve to the lowest tag index at each
/// backtrack step.
inline Decoded viterbi_decode(const Tensor& emissions, const CrfParams& crf,
                              const BioConstraints* constraints = nullptr) {
  const std::size_t L = emissions.rows(), T = crf.num_tags();
  if (L == 0) throw Error(Errc::empty_sequence, "viterbi_decode on empty sequence");
  if (emissions.cols() != T) throw Error(Errc::shape, "emission width != tag count");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  Tensor delta = Tensor::matrix(L, T);
  std::vector<std::vector<int>> back(L, std::vector<int>(T, 0));
  for (std::size_t y = 0; y < T; ++y)
    delta(0, y) = (constraints && !constraints->allowed_start[y])
                      ? kNegInf
                      : crf.start.value[y] + emissions(0, y);
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t y = 0; y < T; ++y) {
      double best = kNegInf;
      int arg = 0;
      for (std::size_t p = 0; p < T; ++p) {
        if (constraints && !constraints->allowed_next[p][y]) continue;
        const double s = delta(t - 1, p) + crf.transitions.value(p, y);
        if (s > best) {
          best = s;
          arg = static_cast<int>(p);
        }
      }
      delta(t, y) = best + emissions(t, y);
      back[t][y] = arg;
    }
  }

  Decoded out;
  out.score = kNegInf;
  int last = 0;
  for (std::size_t y = 0; y < T; ++y) {
    const double s = delta(L - 1, y) + crf.end.value[y];
    if (s > out.score) {
      out.score = s;
      last = static_cast<int>(y);
    }
  }
  if (!std::isfinite(out.score)) throw Error(Errc::infeasible, "every tag path is masked");
  out.tags.assign(L, 0);
  out.tags[L - 1] = last;
  for (std::size_t t = L - 1; t > 0; --t) out.tags[t - 1] = back[t][out.tags[t]];
  return out;
}

inline Decoded viterbi_decode(const Tensor& emissions, const CrfParams& crf, const TagSet& tags,
                              bool bio_mask) {
  if (!bio_mask) return viterbi_decode(emissions, crf, nullptr);
  const auto c = BioConstraints::from(tags);
  return viterbi_decode(emissions, crf, &c);
}

// ---------------------------------------------------------------------------
// Tagged sentences and entity spans

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;

  std::string text() const {
    std::string s;
    for (const auto& t : tokens) s += t;
    return s;
  }
};

struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;  ///< exclusive
  std::string type;
  std::string surface;

  bool operator==(const EntitySpan&) const = default;
};

/// Promotes every dangling I-X (not preceded by B-X or I-X) to B-X.
inline std::vector<std::string> repair_bio(std::span<const std::string> tags) {
  std::vector<std::string> out(tags.begin(), tags.end());
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (out[t].rfind("I-", 0) != 0) continue;
    const std::string type = out[t].substr(2);
    const bool continues = t > 0 && out[t - 1] != "O" && out[t - 1].substr(2) == type;
    if (!continues) out[t] = "B-" + type;
  }
  return out;
}

inline std::vector<EntitySpan> extract_entities(const TaggedSentence& sentence) {
  if (sentence.tokens.size() != sentence.tags.size())
    throw Error(Errc::shape, "tokens and tags differ in length");
  for (const auto& tag : sentence.tags)
    if (!TagSet::standard().contains(tag)) throw Error(Errc::index, "unknown tag: " + tag);
  const auto tags = repair_bio(sentence.tags);
  std::vector<EntitySpan> spans;
  std::optional<EntitySpan> open;
  auto close = [&] {
    if (open) spans.push_back(std::move(*open));
    open.reset();
  };
  for (std::size_t t = 0; t < tags.size(); ++t) {
    if (tags[t] == "O") {
      close();
    } else if (tags[t][0] == 'B') {
      close();
      open = EntitySpan{t, t + 1, tags[t].substr(2), sentence.tokens[t]};
    } else {
      open->end = t + 1;
      open->surface += sentence.tokens[t];
    }
  }
  close();
  return spans;
}

/// Inverse of extract_entities on repaired sequences.
inline std::vector<std::string> spans_to_tags(std::span<const EntitySpan> spans, std::size_t length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) throw Error(Errc::index, "span outside sentence");
    tags[s.start] = "B-" + s.type;
    for (std::size_t t = s.start + 1; t < s.end; ++t) tags[t] = "I-" + s.type;
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Tagger model

struct NerConfig {
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 16;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size}, {"embed_dim", embed_dim},
            {"hidden_dim", hidden_dim}, {"seed", seed}};
  }

  static NerConfig from_json(const nlohmann::json& j) {
    NerConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.seed = j.value("seed", std::uint64_t{7});
    return c;
  }
};

class NerModel {
 public:
  NerConfig config;
  Parameter embedding;
  nn::LstmWeights fwd;
  nn::LstmWeights bwd;
  nn::Linear projection;
  CrfParams crf;

  static NerModel create(const NerConfig& cfg) {
    if (cfg.vocab_size < 2 || cfg.embed_dim < 1 || cfg.hidden_dim < 1)
      throw Error(Errc::config, "invalid tagger dimensions");
    const std::size_t T = TagSet::standard().size();
    NerModel m;
    m.config = cfg;
    nn::Rng rng(cfg.seed);
    m.embedding = nn::make_embedding("embedding", cfg.vocab_size, cfg.embed_dim, rng);
    m.fwd = nn::LstmWeights("lstm_fwd", cfg.embed_dim, cfg.hidden_dim);
    m.bwd = nn::LstmWeights("lstm_bwd", cfg.embed_dim, cfg.hidden_dim);
    m.fwd.init(rng);
    m.bwd.init(rng);
    m.projection = nn::Linear("emission", 2 * cfg.hidden_dim, T);
    m.projection.init(rng);
    m.crf = CrfParams(T);
    return m;
  }

  ParamList params() {
    ParamList out{&embedding};
    fwd.append_params(out);
    bwd.append_params(out);
    projection.append_params(out);
    crf.append_params(out);
    return out;
  }

  ParamList params() const { return const_cast<NerModel*>(this)->params(); }
};

struct EmissionForward {
  std::vector<TokenId> ids;
  Tensor states;
  nn::BiLstmCache cache;
  Tensor emissions;
};

inline EmissionForward emission_forward(const NerModel& m, std::span<const TokenId> ids) {
  if (ids.empty()) throw Error(Errc::empty_sequence, "tagging an empty sentence");
  EmissionForward f;
  f.ids.assign(ids.begin(), ids.end());
  Tensor X = nn::embed_lookup(f.ids, m.embedding.value);
  f.states = nn::bilstm_encode(X, f.ids.size(), m.fwd, m.bwd, &f.cache);
  f.emissions = m.projection.forward(f.states, f.ids.size());
  return f;
}

inline double sentence_nll(const NerModel& m, std::span<const TokenId> ids, std::span<const int> gold) {
  auto f = emission_forward(m, ids);
  return crf_log_partition(f.emissions, m.crf) - crf_gold_score(f.emissions, gold, m.crf);
}

inline double sentence_nll_backward(NerModel& m, std::span<const TokenId> ids,
                                    std::span<const int> gold, double weight = 1.0) {
  auto f = emission_forward(m, ids);
  Tensor d_em;
  const double nll = crf_nll_backward(f.emissions, gold, m.crf, d_em, weight);
  Tensor d_states = m.projection.backward(f.states, d_em);
  Tensor dX = nn::bilstm_backward(f.cache, d_states, m.fwd, m.bwd);
  nn::embed_backward(f.ids, dX, m.embedding);
  return nll;
}

inline std::vector<int> predict_tags(const NerModel& m, std::span<const TokenId> ids) {
  auto f = emission_forward(m, ids);
  return viterbi_decode(f.emissions, m.crf, TagSet::standard(), true).tags;
}

/// A trained tagger bundled with its character tokenizer.
struct Tagger {
  NerModel model;
  Tokenizer tokenizer;

  TaggedSentence tag_tokens(std::vector<std::string> tokens) const {
    TaggedSentence out;
    out.tokens = std::move(tokens);
    if (out.tokens.empty()) return out;
    const auto ts = tokenizer.from_tokens(out.tokens);
    for (int y : predict_tags(model, ts.ids)) out.tags.push_back(TagSet::standard().name(y));
    return out;
  }

  TaggedSentence tag(std::string_view text) const { return tag_tokens(tokenizer.segment(text)); }
};

struct NerEpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;  ///< mean per-sentence NLL
  double token_accuracy = 0.0;
};

struct NerTrainOptions {
  std::size_t epochs = 200;
  std::size_t batch_size = 1;
  nn::NadamConfig nadam;
};

struct NerTrainResult {
  Tagger tagger;
  std::vector<NerEpochStats> history;
};

inline std::vector<int> tag_indices(const TaggedSentence& s) {
  std::vector<int> out;
  for (const auto& t : s.tags) out.push_back(TagSet::standard().index(t));
  return out;
}

/// Token-level accuracy of Viterbi output against gold tags.
inline double token_accuracy(const Tagger& tagger, std::span<const TaggedSentence> data) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : data) {
    auto pred = tagger.tag_tokens(s.tokens);
    for (std::size_t t = 0; t < s.tags.size(); ++t, ++total)
      if (pred.tags[t] == s.tags[t]) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

inline void validate_sentence(const TaggedSentence& s) {
  if (s.tokens.empty()) throw Error(Errc::validation, "tagged sentence is empty");
  if (s.tokens.size() != s.tags.size())
    throw Error(Errc::validation, "tokens and tags differ in length");
  for (const auto& t : s.tags)
    if (!TagSet::standard().contains(t)) throw Error(Errc::validation, "unknown tag: " + t);
}

/// Builds a character vocabulary from the data (min count 1) and fits the
/// tagger. The vocabulary size in `cfg` is overridden.
inline NerTrainResult train_ner(const std::vector<TaggedSentence>& dataset, NerConfig cfg,
                                const NerTrainOptions& opt) {
  if (dataset.empty()) throw Error(Errc::validation, "train_ner on an empty dataset");
  std::vector<std::vector<std::string>> corpus;
  for (const auto& s : dataset) {
    validate_sentence(s);
    corpus.push_back(s.tokens);
  }
  NerTrainResult result;
  result.tagger.tokenizer = Tokenizer(SegmenterConfig::character(), build_vocab(corpus, 1));
  cfg.vocab_size = result.tagger.tokenizer.vocab().size();
  result.tagger.model = NerModel::create(cfg);
  NerModel& model = result.tagger.model;

  std::vector<std::vector<TokenId>> ids;
  std::vector<std::vector<int>> gold;
  for (const auto& s : dataset) {
    ids.push_back(result.tagger.tokenizer.from_tokens(s.tokens).ids);
    gold.push_back(tag_indices(s));
  }

  const ParamList params = model.params();
  nn::NadamState state{opt.nadam, 0, {}, {}};
  nn::Rng rng(cfg.seed + 1);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  const std::size_t batch = std::max<std::size_t>(1, opt.batch_size);

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      nn::zero_grads(params);
      for (std::size_t k = start; k < end; ++k)
        total += sentence_nll_backward(model, ids[order[k]], gold[order[k]], weight);
      nn::nadam_step(params, state);
    }
    result.history.push_back(
        {epoch, total / static_cast<double>(order.size()), token_accuracy(result.tagger, dataset)});
  }
  return result;
}

inline void save_tagger(const std::string& path, const Tagger& tagger) {
  nlohmann::json cfg{{"kind", "nertagger"}, {"model", tagger.model.config.to_json()},
                     {"tags", TagSet::standard().names()},
                     {"tokenizer", tagger.tokenizer.to_json()}};
  nn::save_checkpoint(path, cfg, tagger.model.params());
}

inline Tagger load_tagger(const std::string& path) {
  auto ck = nn::load_checkpoint(path);
  if (ck.config.value("kind", std::string()) != "nertagger")
    throw Error(Errc::parse, path + " is not a tagger checkpoint");
  Tagger t;
  t.model = NerModel::create(NerConfig::from_json(ck.config.at("model")));
  nn::restore_params(ck, t.model.params());
  t.tokenizer = Tokenizer::from_json(ck.config.at("tokenizer"));
  return t;
}

/// JSON Lines: {"text": [tokens], "tags": [BIO strings]} per line.
inline std::vector<TaggedSentence> load_tagged_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open tagged dataset: " + path);
  std::vector<TaggedSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (utf8::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TaggedSentence s{j.at("text").get<std::vector<std::string>>(),
                       j.at("tags").get<std::vector<std::string>>()};
      validate_sentence(s);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mfqa::ner
