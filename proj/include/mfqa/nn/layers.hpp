#pragma once

// Embedding lookup, LSTM cell and bidirectional encoder, each with a
// hand-written backward pass that accumulates into Parameter::grad.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mfqa/nn/tensor.hpp"
#include "mfqa/textcore.hpp"

namespace mfqa::nn {

// ---------------------------------------------------------------------------
// Embedding

/// Row k of the result is row ids[k] of the table; PAD always maps to zeros.
inline Tensor embed_lookup(std::span<const TokenId> ids, const Tensor& table) {
  const std::size_t dim = table.cols();
  Tensor out = Tensor::matrix(ids.size(), dim);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const TokenId id = ids[k];
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
      throw Error(Errc::index, "embedding id " + std::to_string(id) + " out of range");
    if (id == Vocabulary::kPad) continue;
    auto src = table.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

inline void embed_backward(std::span<const TokenId> ids, const Tensor& d_out, Parameter& table) {
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] == Vocabulary::kPad) continue;
    auto dst = table.grad.row(static_cast<std::size_t>(ids[k]));
    auto src = d_out.row(k);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

inline Parameter make_embedding(const std::string& name, std::size_t vocab_size,
                                std::size_t dim, Rng& rng) {
  Parameter p(name, {vocab_size, dim});
  rng.fill_uniform(p.value, -kInitScale, kInitScale);
  for (auto& v : p.value.row(Vocabulary::kPad)) v = 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// LSTM cell
//
// Gates are stacked row-wise in the order input, forget, output, candidate:
//   W is 4H x D, U is 4H x H, b is 4H.

enum Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

struct LstmWeights {
  Parameter W;
  Parameter U;
  Parameter b;

  LstmWeights() = default;
  LstmWeights(const std::string& prefix, std::size_t input_dim, std::size_t hidden)
      : W(prefix + ".W", {4 * hidden, input_dim}),
        U(prefix + ".U", {4 * hidden, hidden}),
        b(prefix + ".b", {4 * hidden}) {}

  std::size_t hidden() const { return U.value.cols(); }
  std::size_t input_dim() const { return W.value.cols(); }

  /// uniform(-0.08, 0.08) weights, zero biases except forget bias 1.
  void init(Rng& rng) {
    rng.fill_uniform(W.value, -kInitScale, kInitScale);
    rng.fill_uniform(U.value, -kInitScale, kInitScale);
    b.value.fill(0.0);
    const std::size_t h = hidden();
    for (std::size_t k = 0; k < h; ++k) b.value[kForget * h + k] = 1.0;
  }

  void append_params(ParamList& out) {
    out.push_back(&W);
    out.push_back(&U);
    out.push_back(&b);
  }
};

struct LstmStepCache {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> gates;  // activated, 4H in gate order
  std::vector<double> c, tanh_c;
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

inline LstmState lstm_step(std::span<const double> x, std::span<const double> h_prev,
                           std::span<const double> c_prev, const LstmWeights& w,
                           LstmStepCache* cache = nullptr) {
  const std::size_t H = w.hidden();
  const std::size_t D = w.input_dim();
  if (x.size() != D || h_prev.size() != H || c_prev.size() != H ||
      w.W.value.rows() != 4 * H || w.b.value.size() != 4 * H)
    throw Error(Errc::shape, "lstm_step dimension mismatch");

  std::vector<double> gates(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double z = w.b.value[r];
    z += dot(w.W.value.row(r), x);
    z += dot(w.U.value.row(r), h_prev);
    gates[r] = (r / H == kCandidate) ? std::tanh(z) : sigmoid(z);
  }

  LstmState out{std::vector<double>(H), std::vector<double>(H)};
  std::vector<double> tanh_c(H);
  for (std::size_t k = 0; k < H; ++k) {
    const double i = gates[kInput * H + k];
    const double f = gates[kForget * H + k];
    const double o = gates[kOutput * H + k];
    const double g = gates[kCandidate * H + k];
    out.c[k] = f * c_prev[k] + i * g;
    tanh_c[k] = std::tanh(out.c[k]);
    out.h[k] = o * tanh_c[k];
  }

  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->gates = std::move(gates);
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

/// Backward through one cell step. `dh` and `dc` are gradients w.r.t. the
/// step's outputs; `dx`, `dh_prev`, `dc_prev` are overwritten.
inline void lstm_step_backward(const LstmStepCache& cache, std::span<const double> dh,
                               std::span<const double> dc, LstmWeights& w,
                               std::span<double> dx, std::span<double> dh_prev,
                               std::span<double> dc_prev) {
  const std::size_t H = w.hidden();
  const std::size_t D = w.input_dim();
  std::vector<double> dz(4 * H);
  for (std::size_t k = 0; k < H; ++k) {
    const double i = cache.gates[kInput * H + k];
    const double f = cache.gates[kForget * H + k];
    const double o = cache.gates[kOutput * H + k];
    const double g = cache.gates[kCandidate * H + k];
    const double tc = cache.tanh_c[k];
    const double dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
    dz[kInput * H + k] = dct * g * i * (1.0 - i);
    dz[kForget * H + k] = dct * cache.c_prev[k] * f * (1.0 - f);
    dz[kOutput * H + k] = dh[k] * tc * o * (1.0 - o);
    dz[kCandidate * H + k] = dct * i * (1.0 - g * g);
    dc_prev[k] = dct * f;
  }

  std::fill(dx.begin(), dx.end(), 0.0);
  std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    const double d = dz[r];
    if (d == 0.0) continue;
    w.b.grad[r] += d;
    auto gW = w.W.grad.row(r);
    auto vW = w.W.value.row(r);
    for (std::size_t j = 0; j < D; ++j) {
      gW[j] += d * cache.x[j];
      dx[j] += d * vW[j];
    }
    auto gU = w.U.grad.row(r);
    auto vU = w.U.value.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      gU[j] += d * cache.h_prev[j];
      dh_prev[j] += d * vU[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Bidirectional encoder

struct BiLstmCache {
  std::size_t length = 0;
  std::vector<LstmStepCache> forward;   // indexed by position
  std::vector<LstmStepCache> backward;  // indexed by position
};

/// Output row t is [forward h_t, backward h_t] over the first `true_len`
/// rows of X; rows at or beyond `true_len` are zero.
inline Tensor bilstm_encode(const Tensor& X, std::size_t true_len, const LstmWeights& fwd,
                            const LstmWeights& bwd, BiLstmCache* cache = nullptr) {
  if (true_len == 0) throw Error(Errc::empty_sequence, "bilstm_encode on empty sequence");
  if (true_len > X.rows()) throw Error(Errc::shape, "true_len exceeds sequence rows");
  if (fwd.hidden() != bwd.hidden()) throw Error(Errc::shape, "direction hidden sizes differ");
  const std::size_t H = fwd.hidden();
  Tensor out = Tensor::matrix(X.rows(), 2 * H);
  if (cache) {
    cache->length = true_len;
    cache->forward.assign(true_len, {});
    cache->backward.assign(true_len, {});
  }

  LstmState s{std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
  for (std::size_t t = 0; t < true_len; ++t) {
    s = lstm_step(X.row(t), s.h, s.c, fwd, cache ? &cache->forward[t] : nullptr);
    std::copy(s.h.begin(), s.h.end(), out.row(t).begin());
  }
  s = {std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
  for (std::size_t t = true_len; t-- > 0;) {
    s = lstm_step(X.row(t), s.h, s.c, bwd, cache ? &cache->backward[t] : nullptr);
    std::copy(s.h.begin(), s.h.end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(H));
  }
  return out;
}

/// Returns dL/dX (same row count as d_out) and accumulates weight grads.
inline Tensor bilstm_backward(const BiLstmCache& cache, const Tensor& d_out, LstmWeights& fwd,
                              LstmWeights& bwd) {
  const std::size_t H = fwd.hidden();
  const std::size_t D = fwd.input_dim();
  Tensor dX = Tensor::matrix(d_out.rows(), D);
  std::vector<double> dh(H), dh_next(H, 0.0), dc_next(H, 0.0), dx(D), dh_prev(H), dc_prev(H);

  for (std::size_t t = cache.length; t-- > 0;) {
    auto g = d_out.row(t);
    for (std::size_t k = 0; k < H; ++k) dh[k] = g[k] + dh_next[k];
    lstm_step_backward(cache.forward[t], dh, dc_next, fwd, dx, dh_prev, dc_prev);
    for (std::size_t j = 0; j < D; ++j) dX(t, j) += dx[j];
    dh_next = dh_prev;
    dc_next = dc_prev;
  }

  std::fill(dh_next.begin(), dh_next.end(), 0.0);
  std::fill(dc_next.begin(), dc_next.end(), 0.0);
  for (std::size_t t = 0; t < cache.length; ++t) {
    auto g = d_out.row(t);
    for (std::size_t k = 0; k < H; ++k) dh[k] = g[H + k] + dh_next[k];
    lstm_step_backward(cache.backward[t], dh, dc_next, bwd, dx, dh_prev, dc_prev);
    for (std::size_t j = 0; j < D; ++j) dX(t, j) += dx[j];
    dh_next = dh_prev;
    dc_next = dc_prev;
  }
  return dX;
}

// ---------------------------------------------------------------------------
// Dense projection (used for tagger emissions)

struct Linear {
  Parameter W;  // out x in
  Parameter b;  // out

  Linear() = default;
  Linear(const std::string& prefix, std::size_t in, std::size_t out)
      : W(prefix + ".W", {out, in}), b(prefix + ".b", {out}) {}

  void init(Rng& rng) {
    rng.fill_uniform(W.value, -kInitScale, kInitScale);
    b.value.fill(0.0);
  }

  void append_params(ParamList& out) {
    out.push_back(&W);
    out.push_back(&b);
  }

  /// Applies the projection to the first `rows` rows of X.
  Tensor forward(const Tensor& X, std::size_t rows) const {
    Tensor Y = Tensor::matrix(rows, W.value.rows());
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t o = 0; o < W.value.rows(); ++o)
        Y(t, o) = b.value[o] + dot(W.value.row(o), X.row(t));
    return Y;
  }

  Tensor backward(const Tensor& X, const Tensor& dY) {
    Tensor dX = Tensor::matrix(X.rows(), X.cols());
    for (std::size_t t = 0; t < dY.rows(); ++t) {
      for (std::size_t o = 0; o < W.value.rows(); ++o) {
        const double d = dY(t, o);
        b.grad[o] += d;
        auto gW = W.grad.row(o);
        auto vW = W.value.row(o);
        for (std::size_t j = 0; j < X.cols(); ++j) {
          gW[j] += d * X(t, j);
          dX(t, j) += d * vW[j];
        }
      }
    }
    return dX;
  }
};

}  // namespace mfqa::nn
