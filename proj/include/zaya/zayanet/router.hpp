/*
 * Copyright 2026 The Zaya Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Router with exponential depth averaging (EDA), a PID-style bias balancer and
// the per-layer residual scaling gates.
//
//   r      = x W_down + gamma * r_prev
//   scores = softmax(W_logits gelu(W2 gelu(W1 rmsnorm(r))))
//   chosen = topk(scores + bias)      mixing weight = scores[chosen]

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "zaya/numcore/norm.hpp"

namespace zaya::net {

inline constexpr double kRouterNormEps = 1e-6;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

namespace detail {

inline Matrix map(const Matrix& m, double (*f)(double)) {
  Matrix out = m;
  for (auto& x : out.flat()) x = f(x);
  return out;
}

inline Matrix hadamard(Matrix a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("hadamard: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.flat()[i] *= b.flat()[i];
  return a;
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string("router: non-finite ") + what);
}

}  // namespace detail

struct RouterState {
  Matrix W_down;    // h x D
  Matrix mlp1;      // D x D
  Matrix mlp2;      // D x D
  Matrix logits_w;  // D x E
  double gamma = 0.0;
  Matrix prev_r;              // tokens x D; empty on the first layer (zeros)
  std::vector<double> bias;   // E

  std::size_t hidden() const noexcept { return W_down.rows(); }
  std::size_t dim() const noexcept { return W_down.cols(); }
  std::size_t experts() const noexcept { return logits_w.cols(); }
  std::size_t param_count() const noexcept { return W_down.size() + mlp1.size() + mlp2.size() + logits_w.size(); }

  void validate(std::size_t tokens) const {
    const std::size_t D = dim();
    if (mlp1.rows() != D || mlp1.cols() != D || mlp2.rows() != D || mlp2.cols() != D || logits_w.rows() != D)
      throw ShapeError("router: mlp/logit weights inconsistent with W_down");
    if (bias.size() != experts()) throw ShapeError("router: bias length must equal expert count");
    if (!prev_r.empty() && (prev_r.rows() != tokens || prev_r.cols() != D))
      throw ShapeError(zaya::detail::concat("router: prev_r is ", prev_r.rows(), "x", prev_r.cols(), ", expected ",
                                            tokens, "x", D));
  }

  template <class Rng>
  static RouterState random(std::size_t h, std::size_t D, std::size_t E, Rng& rng, double gamma = 0.0) {
    return {Matrix::gaussian(h, D, rng, 1.0 / std::sqrt(double(h))), Matrix::gaussian(D, D, rng, 1.0 / std::sqrt(double(D))),
            Matrix::gaussian(D, D, rng, 1.0 / std::sqrt(double(D))), Matrix::gaussian(D, E, rng, 1.0 / std::sqrt(double(D))),
            gamma, {}, std::vector<double>(E, 0.0)};
  }
};

/// Intermediates kept for the backward pass.
struct RouterTrace {
  Matrix r, n, p1, h1, p2, h2, z;
  NormSaved norm;
};

struct RouterOutput {
  Matrix scores;                                  // tokens x E
  std::vector<std::vector<std::size_t>> chosen;   // tokens x k, best first
  Matrix probs;                                   // tokens x k
  Matrix r;                                       // tokens x D, next layer's prev_r
  RouterTrace trace;
};

inline void softmax_rows(Matrix& z) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0;
    for (auto& x : row) s += (x = std::exp(x - m));
    for (auto& x : row) x /= s;
  }
}

/// Indices of the k largest values; ties go to the lower index.
inline std::vector<std::size_t> topk(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(k);
  return idx;
}

inline RouterOutput router_forward(const Matrix& x, const RouterState& st, std::size_t k) {
  st.validate(x.rows());
  if (x.cols() != st.hidden()) throw ShapeError("router: token width != W_down rows");
  if (k < 1 || k > st.experts()) throw ConfigError("router: need 1 <= k <= E");
  detail::require_finite(x, "input");

  RouterOutput out;
  auto& tr = out.trace;
  tr.r = gemm(x, st.W_down);
  if (!st.prev_r.empty()) tr.r += st.gamma * st.prev_r;

  const std::vector<double> ones(st.dim(), 1.0), zeros(st.dim(), 0.0);
  auto nf = norm_forward(tr.r, Matrix(tr.r.rows(), tr.r.cols()), ones, zeros, kRouterNormEps, NormMode::rmsnorm);
  tr.n = std::move(nf.y);
  tr.norm = std::move(nf.saved);
  tr.p1 = gemm(tr.n, st.mlp1);
  tr.h1 = detail::map(tr.p1, gelu);
  tr.p2 = gemm(tr.h1, st.mlp2);
  tr.h2 = detail::map(tr.p2, gelu);
  tr.z = gemm(tr.h2, st.logits_w);
  detail::require_finite(tr.z, "logits");

  out.scores = tr.z;
  softmax_rows(out.scores);
  out.r = tr.r;
  out.probs = Matrix(x.rows(), k);
  std::vector<double> biased(st.experts());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (std::size_t e = 0; e < biased.size(); ++e) biased[e] = out.scores(t, e) + st.bias[e];
    out.chosen.push_back(topk(biased, k));
    for (std::size_t j = 0; j < k; ++j) out.probs(t, j) = out.scores(t, out.chosen[t][j]);
  }
  return out;
}

struct RouterGrads {
  Matrix dx, dW_down, dmlp1, dmlp2, dlogits_w, dprev_r;
  double dgamma = 0;
};

/// Backward from d(probs). Selection is treated as constant.
inline RouterGrads router_backward(const Matrix& x, const RouterState& st, const RouterOutput& out, const Matrix& dprobs) {
  const auto& tr = out.trace;
  const std::size_t T = x.rows(), E = st.experts();
  if (dprobs.rows() != T || dprobs.cols() != out.probs.cols()) throw ShapeError("router_backward: dprobs shape");

  Matrix dz(T, E);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> ds(E, 0.0);
    for (std::size_t j = 0; j < out.chosen[t].size(); ++j) ds[out.chosen[t][j]] += dprobs(t, j);
    double dot = 0;
    for (std::size_t e = 0; e < E; ++e) dot += ds[e] * out.scores(t, e);
    for (std::size_t e = 0; e < E; ++e) dz(t, e) = out.scores(t, e) * (ds[e] - dot);
  }
  RouterGrads g;
  g.dlogits_w = gemm(tr.h2, dz, true);
  Matrix dp2 = detail::hadamard(gemm(dz, st.logits_w, false, true), detail::map(tr.p2, gelu_grad));
  g.dmlp2 = gemm(tr.h1, dp2, true);
  Matrix dp1 = detail::hadamard(gemm(dp2, st.mlp2, false, true), detail::map(tr.p1, gelu_grad));
  g.dmlp1 = gemm(tr.n, dp1, true);
  Matrix dn = gemm(dp1, st.mlp1, false, true);
  const std::vector<double> ones(st.dim(), 1.0);
  Matrix dr = norm_backward(dn, tr.norm, tr.r, ones).dx;
  g.dW_down = gemm(x, dr, true);
  g.dx = gemm(dr, st.W_down, false, true);
  if (!st.prev_r.empty()) {
    for (std::size_t i = 0; i < dr.size(); ++i) g.dgamma += dr.flat()[i] * st.prev_r.flat()[i];
    g.dprev_r = st.gamma * dr;
  }
  return g;
}

/// Fraction of routed (token, slot) pairs landing on each expert.
inline std::vector<double> expert_loads(const std::vector<std::vector<std::size_t>>& chosen, std::size_t E) {
  std::vector<double> load(E, 0.0);
  std::size_t n = 0;
  for (const auto& c : chosen)
    for (auto e : c) {
      if (e >= E) throw ShapeError("expert index out of range");
      load[e] += 1.0;
      ++n;
    }
  if (n)
    for (auto& l : load) l /= double(n);
  return load;
}

// ---------------------------------------------------------------------------
// PID balancer. The control signal goes through an Adam-style moment
// estimator before it touches the bias. The moment estimator normalizes each
// expert's step to about lr, so a plain running integral winds up and drives a
// limit cycle; the integral therefore leaks (integral_decay = 1 disables it).

struct PIDBalancer {
  double kp = 0.01, ki = 0.001, kd = 0.001;
  double lr = 0.01;
  double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
  double integral_decay = 0.9;
  std::vector<double> integral, prev_error;
  std::vector<double> adam_m1, adam_m2;
  std::size_t adam_step = 0;

  explicit PIDBalancer(std::size_t experts = 0)
      : integral(experts, 0.0), prev_error(experts, 0.0), adam_m1(experts, 0.0), adam_m2(experts, 0.0) {}

  std::size_t experts() const noexcept { return integral.size(); }
};

inline void pid_bias_update(PIDBalancer& bal, std::span<const double> loads, std::vector<double>& bias) {
  const std::size_t E = bal.experts();
  if (loads.size() != E || bias.size() != E)
    throw ShapeError(zaya::detail::concat("pid_bias_update: expected ", E, " loads and biases"));
  double total = 0;
  for (double l : loads) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("pid_bias_update: loads must be non-negative and finite");
    total += l;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError(zaya::detail::concat("pid_bias_update: loads sum to ", total));

  ++bal.adam_step;
  const double c1 = 1.0 - std::pow(bal.beta1, double(bal.adam_step));
  const double c2 = 1.0 - std::pow(bal.beta2, double(bal.adam_step));
  for (std::size_t i = 0; i < E; ++i) {
    const double e = loads[i] - 1.0 / double(E);
    bal.integral[i] = bal.integral_decay * bal.integral[i] + e;
    const double u = bal.kp * e + bal.ki * bal.integral[i] + bal.kd * (e - bal.prev_error[i]);
    bal.prev_error[i] = e;
    bal.adam_m1[i] = bal.beta1 * bal.adam_m1[i] + (1 - bal.beta1) * u;
    bal.adam_m2[i] = bal.beta2 * bal.adam_m2[i] + (1 - bal.beta2) * u * u;
    bias[i] -= bal.lr * (bal.adam_m1[i] / c1) / (std::sqrt(bal.adam_m2[i] / c2) + bal.eps);
  }
}

// ---------------------------------------------------------------------------

struct ResidualScaleParams {
  std::vector<double> alpha;
  std::vector<double> bias;

  static ResidualScaleParams identity(std::size_t h) { return {std::vector<double>(h, 1.0), std::vector<double>(h, 0.0)}; }
};

/// y = alpha (.) x + b, per row.
inline Matrix residual_scale(const Matrix& x, const ResidualScaleParams& p) {
  if (p.alpha.size() != x.cols() || p.bias.size() != x.cols())
    throw ShapeError(zaya::detail::concat("residual_scale: gate length must be ", x.cols()));
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = p.alpha[c] * x(r, c) + p.bias[c];
  return y;
}

}  // namespace zaya::net
