#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mfqa/nn/tensor.hpp"

namespace mfqa::nn {

inline constexpr double kProbEps = 1e-7;

/// Binary cross entropy on a probability clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(double p, int label) {
  const double q = std::clamp(p, kProbEps, 1.0 - kProbEps);
  return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

/// d bce / d p; zero where the clamp is active.
inline double bce_grad(double p, int label) {
  if (p < kProbEps || p > 1.0 - kProbEps) return 0.0;
  return label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

struct NadamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct NadamState {
  NadamConfig config;
  long t = 0;  ///< completed steps
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One Nesterov-Adam update of every parameter from its current grad:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr (b1 m/(1-b1^(t+1)) + (1-b1) g/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
/// with t the step count after this update.
inline void nadam_step(const ParamList& params, NadamState& state) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size())
    throw Error(Errc::shape, "optimizer state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->grad.same_shape(state.m[k]) || !params[k]->value.same_shape(state.m[k]))
      throw Error(Errc::shape, "gradient/moment shape mismatch for " + params[k]->name);
  }

  const auto& c = state.config;
  const long t = state.t + 1;
  const double b1t = std::pow(c.beta1, static_cast<double>(t));
  const double b1t1 = std::pow(c.beta1, static_cast<double>(t + 1));
  const double b2t = std::pow(c.beta2, static_cast<double>(t));

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& theta = params[k]->value.values();
    const auto& g = params[k]->grad.values();
    auto& m = state.m[k].values();
    auto& v = state.v[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / (1.0 - b1t1);
      const double v_hat = v[i] / (1.0 - b2t);
      const double num = c.beta1 * m_hat + (1.0 - c.beta1) * g[i] / (1.0 - b1t);
      theta[i] -= c.lr * num / (std::sqrt(v_hat) + c.eps);
    }
  }
  state.t = t;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares the gradients currently stored in `params` against central
/// differences of `loss_fn`. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8). Parameter values are restored.
inline GradCheckReport grad_check(const std::function<double()>& loss_fn,
                                  const ParamList& params, double step = 1e-5) {
  GradCheckReport report;
  for (auto* p : params) {
    auto& vals = p->value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + step;
      const double up = loss_fn();
      vals[i] = saved - step;
      const double down = loss_fn();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mfqa::nn
