#pragma once

// Interactive-attention BiLSTM sentence-pair similarity.
//
// Both sentences go through one shared embedding table and one shared
// BiLSTM. Each encoded word attends over the other sentence (dot-product
// scores, softmax per row for sentence a and per column for sentence b),
// the encoder states and attended states are pooled over time and
// concatenated, and the two vectors are compared by cosine. The reported
// score is (1 + cosine) / 2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfqa/error.hpp"
#include "mfqa/nn/checkpoint.hpp"
#include "mfqa/nn/layers.hpp"
#include "mfqa/nn/optim.hpp"
#include "mfqa/nn/tensor.hpp"
#include "mfqa/textcore.hpp"

namespace mfqa::sim {

using nn::Parameter;
using nn::ParamList;
using nn::Tensor;
using Mask = std::vector<bool>;

enum class Pooling { mean, max };

struct SimModelConfig {
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 8;
  std::size_t hidden_dim = 8;
  std::size_t max_len = 32;
  bool interactive_attention = true;  ///< false gives the plain BiLSTM ablation
  Pooling pooling = Pooling::mean;
  std::uint64_t seed = 7;

  void validate() const {
    if (vocab_size < 2 || embed_dim < 1 || hidden_dim < 1 || max_len < 1)
      throw Error(Errc::config, "invalid similarity model dimensions");
  }

  /// Length of the pooled sentence vector compared by cosine.
  std::size_t repr_dim() const { return (interactive_attention ? 4 : 2) * hidden_dim; }

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size},
            {"embed_dim", embed_dim},
            {"hidden_dim", hidden_dim},
            {"max_len", max_len},
            {"interactive_attention", interactive_attention},
            {"pooling", pooling == Pooling::mean ? "mean" : "max"},
            {"seed", seed}};
  }

  static SimModelConfig from_json(const nlohmann::json& j) {
    SimModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.interactive_attention = j.value("interactive_attention", true);
    c.pooling = j.value("pooling", std::string("mean")) == "max" ? Pooling::max : Pooling::mean;
    c.seed = j.value("seed", std::uint64_t{7});
    c.validate();
    return c;
  }
};

class SimModel {
 public:
  SimModelConfig config;
  Parameter embedding;
  nn::LstmWeights fwd;
  nn::LstmWeights bwd;

  static SimModel create(const SimModelConfig& cfg) {
    cfg.validate();
    SimModel m;
    m.config = cfg;
    nn::Rng rng(cfg.seed);
    m.embedding = nn::make_embedding("embedding", cfg.vocab_size, cfg.embed_dim, rng);
    m.fwd = nn::LstmWeights("lstm_fwd", cfg.embed_dim, cfg.hidden_dim);
    m.bwd = nn::LstmWeights("lstm_bwd", cfg.embed_dim, cfg.hidden_dim);
    m.fwd.init(rng);
    m.bwd.init(rng);
    return m;
  }

  ParamList params() {
    ParamList out{&embedding};
    fwd.append_params(out);
    bwd.append_params(out);
    return out;
  }

  ParamList params() const { return const_cast<SimModel*>(this)->params(); }
};

// ---------------------------------------------------------------------------
// Cross attention

struct AttentionMatrix {
  Tensor e;  ///< raw scores, l_a x l_b
  Mask row_mask;
  Mask col_mask;
};

struct CrossAttention {
  Tensor attended_a;   ///< l_a x 2H
  Tensor attended_b;   ///< l_b x 2H
  AttentionMatrix scores;
  Tensor row_weights;  ///< softmax over j of e_i., rows sum to 1
  Tensor col_weights;  ///< softmax over i of e_.j, columns sum to 1
};

inline CrossAttention cross_attention(const Tensor& A, const Tensor& B, const Mask& mask_a,
                                      const Mask& mask_b) {
  const std::size_t la = A.rows(), lb = B.rows(), d = A.cols();
  if (B.cols() != d || mask_a.size() != la || mask_b.size() != lb)
    throw Error(Errc::shape, "cross_attention shape mismatch");
  if (std::none_of(mask_a.begin(), mask_a.end(), [](bool v) { return v; }) ||
      std::none_of(mask_b.begin(), mask_b.end(), [](bool v) { return v; }))
    throw Error(Errc::degenerate_input, "cross_attention: a sentence is fully masked");

  CrossAttention out;
  out.scores.row_mask = mask_a;
  out.scores.col_mask = mask_b;
  out.scores.e = Tensor::matrix(la, lb);
  out.row_weights = Tensor::matrix(la, lb);
  out.col_weights = Tensor::matrix(la, lb);
  out.attended_a = Tensor::matrix(la, d);
  out.attended_b = Tensor::matrix(lb, d);
  Tensor& e = out.scores.e;

  for (std::size_t i = 0; i < la; ++i) {
    if (!mask_a[i]) continue;
    for (std::size_t j = 0; j < lb; ++j)
      if (mask_b[j]) e(i, j) = nn::dot(A.row(i), B.row(j));
  }

  // Row softmax (sentence a attends over b), max-subtracted.
  for (std::size_t i = 0; i < la; ++i) {
    if (!mask_a[i]) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < lb; ++j)
      if (mask_b[j]) mx = std::max(mx, e(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < lb; ++j)
      if (mask_b[j]) z += (out.row_weights(i, j) = std::exp(e(i, j) - mx));
    for (std::size_t j = 0; j < lb; ++j) {
      if (!mask_b[j]) continue;
      const double w = (out.row_weights(i, j) /= z);
      auto dst = out.attended_a.row(i);
      auto src = B.row(j);
      for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
    }
  }

  // Column softmax (sentence b attends over a).
  for (std::size_t j = 0; j < lb; ++j) {
    if (!mask_b[j]) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < la; ++i)
      if (mask_a[i]) mx = std::max(mx, e(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < la; ++i)
      if (mask_a[i]) z += (out.col_weights(i, j) = std::exp(e(i, j) - mx));
    for (std::size_t i = 0; i < la; ++i) {
      if (!mask_a[i]) continue;
      const double w = (out.col_weights(i, j) /= z);
      auto dst = out.attended_b.row(j);
      auto src = A.row(i);
      for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
    }
  }
  return out;
}

/// Adds dL/dA and dL/dB given gradients w.r.t. both attended outputs.
inline void cross_attention_backward(const Tensor& A, const Tensor& B, const CrossAttention& ca,
                                     const Tensor& d_att_a, const Tensor& d_att_b, Tensor& dA,
                                     Tensor& dB) {
  const std::size_t la = A.rows(), lb = B.rows(), d = A.cols();
  const Mask& ma = ca.scores.row_mask;
  const Mask& mb = ca.scores.col_mask;
  Tensor de = Tensor::matrix(la, lb);

  for (std::size_t i = 0; i < la; ++i) {
    if (!ma[i]) continue;
    double weighted = 0.0;
    std::vector<double> dp(lb, 0.0);
    for (std::size_t j = 0; j < lb; ++j) {
      if (!mb[j]) continue;
      const double p = ca.row_weights(i, j);
      dp[j] = nn::dot(d_att_a.row(i), B.row(j));
      weighted += p * dp[j];
      auto g = dB.row(j);
      auto src = d_att_a.row(i);
      for (std::size_t k = 0; k < d; ++k) g[k] += p * src[k];
    }
    for (std::size_t j = 0; j < lb; ++j)
      if (mb[j]) de(i, j) += ca.row_weights(i, j) * (dp[j] - weighted);
  }

  for (std::size_t j = 0; j < lb; ++j) {
    if (!mb[j]) continue;
    double weighted = 0.0;
    std::vector<double> dq(la, 0.0);
    for (std::size_t i = 0; i < la; ++i) {
      if (!ma[i]) continue;
      const double q = ca.col_weights(i, j);
      dq[i] = nn::dot(d_att_b.row(j), A.row(i));
      weighted += q * dq[i];
      auto g = dA.row(i);
      auto src = d_att_b.row(j);
      for (std::size_t k = 0; k < d; ++k) g[k] += q * src[k];
    }
    for (std::size_t i = 0; i < la; ++i)
      if (ma[i]) de(i, j) += ca.col_weights(i, j) * (dq[i] - weighted);
  }

  for (std::size_t i = 0; i < la; ++i) {
    if (!ma[i]) continue;
    for (std::size_t j = 0; j < lb; ++j) {
      if (!mb[j]) continue;
      const double g = de(i, j);
      auto a_i = A.row(i);
      auto b_j = B.row(j);
      auto ga = dA.row(i);
      auto gb = dB.row(j);
      for (std::size_t k = 0; k < d; ++k) {
        ga[k] += g * b_j[k];
        gb[k] += g * a_i[k];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Pooling and sentence vectors

inline std::vector<double> pool(const Tensor& X, const Mask& mask, Pooling how) {
  const std::size_t d = X.cols();
  std::size_t n = 0;
  std::vector<double> out(d, how == Pooling::mean ? 0.0 : -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < X.rows(); ++t) {
    if (!mask[t]) continue;
    ++n;
    auto r = X.row(t);
    for (std::size_t k = 0; k < d; ++k)
      out[k] = how == Pooling::mean ? out[k] + r[k] : std::max(out[k], r[k]);
  }
  if (n == 0) throw Error(Errc::degenerate_input, "pooling over zero unmasked rows");
  if (how == Pooling::mean)
    for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

inline void pool_backward(const Tensor& X, const Mask& mask, Pooling how,
                          std::span<const double> d_pooled, Tensor& dX) {
  const std::size_t d = X.cols();
  if (how == Pooling::mean) {
    const double n = static_cast<double>(std::count(mask.begin(), mask.end(), true));
    for (std::size_t t = 0; t < X.rows(); ++t) {
      if (!mask[t]) continue;
      auto g = dX.row(t);
      for (std::size_t k = 0; k < d; ++k) g[k] += d_pooled[k] / n;
    }
    return;
  }
  for (std::size_t k = 0; k < d; ++k) {
    std::size_t best = X.rows();
    for (std::size_t t = 0; t < X.rows(); ++t)
      if (mask[t] && (best == X.rows() || X(t, k) > X(best, k))) best = t;
    dX(best, k) += d_pooled[k];
  }
}

/// concat(pool(states), pool(attended)); 4H wide for 2H-wide inputs.
inline std::vector<double> sentence_repr(const Tensor& states, const Tensor& attended,
                                         const Mask& mask, Pooling how = Pooling::mean) {
  if (states.rows() != attended.rows() || states.cols() != attended.cols() ||
      mask.size() != states.rows())
    throw Error(Errc::shape, "sentence_repr shape mismatch");
  auto v = pool(states, mask, how);
  auto w = pool(attended, mask, how);
  v.insert(v.end(), w.begin(), w.end());
  return v;
}

struct Cosine {
  double value = 0.0;
  bool zero_norm = false;
};

inline Cosine cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::shape, "cosine of different-length vectors");
  const double na = std::sqrt(nn::dot(a, a));
  const double nb = std::sqrt(nn::dot(b, b));
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(nn::dot(a, b) / (na * nb), -1.0, 1.0), false};
}

inline void cosine_backward(std::span<const double> a, std::span<const double> b, double d_cos,
                            std::vector<double>& da, std::vector<double>& db) {
  const double na = std::sqrt(nn::dot(a, a));
  const double nb = std::sqrt(nn::dot(b, b));
  da.assign(a.size(), 0.0);
  db.assign(b.size(), 0.0);
  if (na == 0.0 || nb == 0.0) return;
  const double c = nn::dot(a, b) / (na * nb);
  for (std::size_t k = 0; k < a.size(); ++k) {
    da[k] = d_cos * (b[k] / (na * nb) - c * a[k] / (na * na));
    db[k] = d_cos * (a[k] / (na * nb) - c * b[k] / (nb * nb));
  }
}

// ---------------------------------------------------------------------------
// Full pair computation

struct SideForward {
  std::vector<TokenId> ids;  ///< padded to max_len
  std::size_t length = 0;
  Mask mask;
  Tensor states;
  nn::BiLstmCache cache;
};

struct PairForward {
  SideForward a, b;
  std::optional<CrossAttention> attention;
  std::vector<double> va, vb;
  Cosine cos;
  double score = 0.5;
};

namespace detail {

inline SideForward encode_side(const SimModel& model, std::span<const TokenId> ids) {
  const std::size_t max_len = model.config.max_len;
  SideForward s;
  s.length = std::min(ids.size(), max_len);
  if (s.length == 0) throw Error(Errc::degenerate_input, "empty sentence");
  s.ids.assign(max_len, Vocabulary::kPad);
  std::copy_n(ids.begin(), s.length, s.ids.begin());
  s.mask.assign(max_len, false);
  std::fill_n(s.mask.begin(), s.length, true);
  Tensor X = nn::embed_lookup(s.ids, model.embedding.value);
  s.states = nn::bilstm_encode(X, s.length, model.fwd, model.bwd, &s.cache);
  return s;
}

}  // namespace detail

inline PairForward pair_forward(const SimModel& model, std::span<const TokenId> qa,
                                std::span<const TokenId> qb) {
  PairForward f;
  f.a = detail::encode_side(model, qa);
  f.b = detail::encode_side(model, qb);
  const Pooling how = model.config.pooling;
  if (model.config.interactive_attention) {
    f.attention = cross_attention(f.a.states, f.b.states, f.a.mask, f.b.mask);
    f.va = sentence_repr(f.a.states, f.attention->attended_a, f.a.mask, how);
    f.vb = sentence_repr(f.b.states, f.attention->attended_b, f.b.mask, how);
  } else {
    f.va = pool(f.a.states, f.a.mask, how);
    f.vb = pool(f.b.states, f.b.mask, how);
  }
  f.cos = cosine(f.va, f.vb);
  f.score = (1.0 + f.cos.value) / 2.0;
  return f;
}

/// Backpropagates d score into model gradients.
inline void pair_backward(SimModel& model, const PairForward& f, double d_score) {
  if (f.cos.zero_norm) return;
  const std::size_t H2 = 2 * model.config.hidden_dim;
  const Pooling how = model.config.pooling;
  std::vector<double> dva, dvb;
  cosine_backward(f.va, f.vb, 0.5 * d_score, dva, dvb);

  Tensor dA = Tensor::matrix(f.a.states.rows(), H2);
  Tensor dB = Tensor::matrix(f.b.states.rows(), H2);
  pool_backward(f.a.states, f.a.mask, how, std::span<const double>(dva).first(H2), dA);
  pool_backward(f.b.states, f.b.mask, how, std::span<const double>(dvb).first(H2), dB);
  if (f.attention) {
    const auto& ca = *f.attention;
    Tensor d_att_a = Tensor::matrix(f.a.states.rows(), H2);
    Tensor d_att_b = Tensor::matrix(f.b.states.rows(), H2);
    pool_backward(ca.attended_a, f.a.mask, how, std::span<const double>(dva).subspan(H2), d_att_a);
    pool_backward(ca.attended_b, f.b.mask, how, std::span<const double>(dvb).subspan(H2), d_att_b);
    cross_attention_backward(f.a.states, f.b.states, ca, d_att_a, d_att_b, dA, dB);
  }
  Tensor dXa = nn::bilstm_backward(f.a.cache, dA, model.fwd, model.bwd);
  nn::embed_backward(f.a.ids, dXa, model.embedding);
  Tensor dXb = nn::bilstm_backward(f.b.cache, dB, model.fwd, model.bwd);
  nn::embed_backward(f.b.ids, dXb, model.embedding);
}

struct SimilarityResult {
  double score = 0.5;       ///< (1 + raw_cosine) / 2, in [0, 1]
  double raw_cosine = 0.0;  ///< in [-1, 1]
  bool zero_norm = false;   ///< a representation had zero norm; score forced to 0.5
};

inline SimilarityResult similarity(const TokenizedSentence& qa, const TokenizedSentence& qb,
                                   const SimModel& model) {
  auto f = pair_forward(model, qa.ids, qb.ids);
  return {f.score, f.cos.value, f.cos.zero_norm};
}

struct PairExample {
  TokenizedSentence q1;
  TokenizedSentence q2;
  int label = 0;
};

inline double pair_loss(const SimModel& model, const PairExample& ex) {
  return nn::bce_loss(pair_forward(model, ex.q1.ids, ex.q2.ids).score, ex.label);
}

/// Loss of one pair; gradients scaled by `weight` are accumulated.
inline double pair_loss_backward(SimModel& model, const PairExample& ex, double weight = 1.0,
                                 double* score_out = nullptr) {
  auto f = pair_forward(model, ex.q1.ids, ex.q2.ids);
  if (score_out) *score_out = f.score;
  pair_backward(model, f, weight * nn::bce_grad(f.score, ex.label));
  return nn::bce_loss(f.score, ex.label);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Fraction of predictions correct, predicting 1 iff score >= threshold.
inline double accuracy_from_scores(std::span<const double> scores, std::span<const int> labels,
                                   double threshold = 0.5) {
  if (scores.empty()) throw Error(Errc::validation, "accuracy over an empty pair list");
  if (scores.size() != labels.size()) throw Error(Errc::shape, "scores/labels length mismatch");
  std::size_t correct = 0;
  for (std::size_t k = 0; k < scores.size(); ++k)
    if ((scores[k] >= threshold ? 1 : 0) == labels[k]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

inline double eval_accuracy(const SimModel& model, std::span<const PairExample> pairs,
                            double threshold = 0.5) {
  if (pairs.empty()) throw Error(Errc::validation, "accuracy over an empty pair list");
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : pairs) {
    scores.push_back(similarity(p.q1, p.q2, model).score);
    labels.push_back(p.label);
  }
  return accuracy_from_scores(scores, labels, threshold);
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  nn::NadamConfig nadam;
  double threshold = 0.5;
  /// Validation fraction numerator over 10 (9:1 split).
  std::size_t validation_tenths = 1;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;  ///< mean training loss over the epoch's steps
  double train_accuracy = 0.0;
  std::optional<double> validation_accuracy;
};

struct TrainResult {
  SimModel model;
  std::vector<EpochStats> history;
  std::vector<std::string> warnings;
  std::vector<PairExample> train;
  std::vector<PairExample> validation;
};

/// Shuffles by seed, then holds out the last tenth for validation.
inline void split_train_validation(const std::vector<PairExample>& data, std::uint64_t seed,
                                   std::size_t validation_tenths, std::vector<PairExample>& train,
                                   std::vector<PairExample>& validation) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  nn::Rng rng(seed ^ 0x5eed5eed5eedULL);
  rng.shuffle(order);
  const std::size_t n_val = data.size() * validation_tenths / 10;
  train.clear();
  validation.clear();
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < order.size() - n_val ? train : validation).push_back(data[order[k]]);
}

inline TrainResult train_sim(const std::vector<PairExample>& dataset, const SimModelConfig& cfg,
                             const TrainOptions& opt) {
  if (dataset.empty()) throw Error(Errc::validation, "train_sim on an empty dataset");
  TrainResult result;
  bool has_pos = false, has_neg = false;
  for (const auto& ex : dataset) {
    if (ex.label != 0 && ex.label != 1) throw Error(Errc::validation, "pair label must be 0 or 1");
    if (ex.q1.empty() || ex.q2.empty()) throw Error(Errc::validation, "pair with an empty sentence");
    (ex.label == 1 ? has_pos : has_neg) = true;
  }
  if (!(has_pos && has_neg)) result.warnings.push_back("dataset contains a single class");

  split_train_validation(dataset, cfg.seed, opt.validation_tenths, result.train, result.validation);
  result.model = SimModel::create(cfg);
  SimModel& model = result.model;
  const ParamList params = model.params();
  nn::NadamState state{opt.nadam, 0, {}, {}};
  nn::Rng rng(cfg.seed + 1);
  const std::size_t batch = std::max<std::size_t>(1, opt.batch_size);

  std::vector<std::size_t> order(result.train.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      nn::zero_grads(params);
      for (std::size_t k = start; k < end; ++k)
        total += pair_loss_backward(model, result.train[order[k]], weight);
      nn::nadam_step(params, state);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = total / static_cast<double>(order.size());
    stats.train_accuracy = eval_accuracy(model, result.train, opt.threshold);
    if (!result.validation.empty())
      stats.validation_accuracy = eval_accuracy(model, result.validation, opt.threshold);
    result.history.push_back(stats);
  }
  return result;
}

inline nlohmann::json history_to_json(const std::vector<EpochStats>& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : history) {
    nlohmann::json e{{"epoch", s.epoch}, {"loss", s.loss}, {"train_accuracy", s.train_accuracy}};
    e["validation_accuracy"] =
        s.validation_accuracy ? nlohmann::json(*s.validation_accuracy) : nlohmann::json();
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence and datasets

/// The checkpoint carries the tokenizer so a model file is self-contained.
inline void save_model(const std::string& path, const SimModel& model, const Tokenizer& tok) {
  nlohmann::json cfg{{"kind", "simnet"}, {"model", model.config.to_json()},
                     {"tokenizer", tok.to_json()}};
  nn::save_checkpoint(path, cfg, model.params());
}

struct LoadedSimModel {
  SimModel model;
  Tokenizer tokenizer;
};

inline LoadedSimModel load_model(const std::string& path) {
  auto ck = nn::load_checkpoint(path);
  if (ck.config.value("kind", std::string()) != "simnet")
    throw Error(Errc::parse, path + " is not a similarity model checkpoint");
  LoadedSimModel out;
  out.model = SimModel::create(SimModelConfig::from_json(ck.config.at("model")));
  nn::restore_params(ck, out.model.params());
  out.tokenizer = Tokenizer::from_json(ck.config.at("tokenizer"));
  return out;
}

struct RawPair {
  std::string q1;
  std::string q2;
  int label = 0;
};

/// JSON Lines: {"q1": string, "q2": string, "label": 0|1} per line.
inline std::vector<RawPair> load_pairs_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open pair dataset: " + path);
  std::vector<RawPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (utf8::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      RawPair p{j.at("q1").get<std::string>(), j.at("q2").get<std::string>(),
                j.at("label").get<int>()};
      if (p.label != 0 && p.label != 1) throw Error(Errc::validation, "label must be 0 or 1");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void save_pairs_jsonl(const std::string& path, std::span<const RawPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write pair dataset: " + path);
  for (const auto& p : pairs)
    out << nlohmann::json{{"q1", p.q1}, {"q2", p.q2}, {"label", p.label}}.dump() << '\n';
}

/// Quora question pairs TSV (id, qid1, qid2, question1, question2,
/// is_duplicate) with a header row; at most `limit` rows (0 = all).
inline std::vector<RawPair> load_qqp_tsv(const std::string& path, std::size_t limit = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open Qqp file: " + path);
  std::vector<RawPair> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line) && (limit == 0 || out.size() < limit)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 6 || cols[3].empty() || cols[4].empty()) continue;
    out.push_back({cols[3], cols[4], cols[5] == "1" ? 1 : 0});
  }
  return out;
}

inline std::vector<PairExample> to_examples(std::span<const RawPair> raw, const Tokenizer& tok) {
  std::vector<PairExample> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back({tok.tokenize(r.q1), tok.tokenize(r.q2), r.label});
  return out;
}

}  // namespace mfqa::sim
