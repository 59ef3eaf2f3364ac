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

// Top-k mixture-of-experts layer: route, permute tokens into per-expert
// groups, run SwiGLU experts, scale by the routing probability, scatter back.

#include <utility>
#include <vector>

#include "zaya/zayanet/cca_mix.hpp"
#include "zaya/zayanet/router.hpp"

namespace zaya::net {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

struct ExpertWeights {
  Matrix fc1;  // h x f
  Matrix fc2;  // f_o x h

  template <class Rng>
  static ExpertWeights random(std::size_t h, std::size_t f, Rng& rng) {
    return {Matrix::gaussian(h, f, rng, 1.0 / std::sqrt(double(h))),
            Matrix::gaussian(f / 2, h, rng, 1.0 / std::sqrt(double(f / 2)))};
  }
};

/// fc1 -> SwiGLU (first half gated by silu, second half linear) -> fc2.
inline Matrix expert_forward(const ExpertWeights& w, const Matrix& x) {
  const Matrix u = gemm(x, w.fc1);
  const std::size_t fo = u.cols() / 2;
  Matrix act(x.rows(), fo);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < fo; ++j) act(r, j) = silu(u(r, j)) * u(r, fo + j);
  return gemm(act, w.fc2);
}

struct ExpertGrads {
  Matrix dx, dfc1, dfc2;
};

inline ExpertGrads expert_backward(const ExpertWeights& w, const Matrix& x, const Matrix& dy) {
  const Matrix u = gemm(x, w.fc1);
  const std::size_t fo = u.cols() / 2;
  Matrix act(x.rows(), fo);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < fo; ++j) act(r, j) = silu(u(r, j)) * u(r, fo + j);
  const Matrix dact = gemm(dy, w.fc2, false, true);
  Matrix du(u.rows(), u.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < fo; ++j) {
      du(r, j) = dact(r, j) * u(r, fo + j) * silu_grad(u(r, j));
      du(r, fo + j) = dact(r, j) * silu(u(r, j));
    }
  return {gemm(du, w.fc1, false, true), gemm(x, du, true), gemm(act, dy, true)};
}

/// Routed (token, slot) pairs grouped by expert. Within an expert the order
/// is by token then slot, so the permutation is deterministic.
struct Dispatch {
  std::vector<std::pair<std::size_t, std::size_t>> order;
  std::vector<std::size_t> offsets;  // E + 1

  std::size_t tokens_for(std::size_t e) const { return offsets[e + 1] - offsets[e]; }
};

inline Dispatch make_dispatch(const std::vector<std::vector<std::size_t>>& chosen, std::size_t E) {
  Dispatch d;
  d.offsets.assign(E + 1, 0);
  for (const auto& c : chosen)
    for (auto e : c) {
      if (e >= E) throw ShapeError(zaya::detail::concat("dispatch: expert index ", e, " out of range (E=", E, ")"));
      ++d.offsets[e + 1];
    }
  for (std::size_t e = 0; e < E; ++e) d.offsets[e + 1] += d.offsets[e];
  d.order.resize(d.offsets[E]);
  std::vector<std::size_t> cursor(d.offsets.begin(), d.offsets.end() - 1);
  for (std::size_t t = 0; t < chosen.size(); ++t)
    for (std::size_t j = 0; j < chosen[t].size(); ++j) d.order[cursor[chosen[t][j]]++] = {t, j};
  return d;
}

inline Matrix gather_rows(const Matrix& x, const Dispatch& d, std::size_t e) {
  Matrix out(d.tokens_for(e), x.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const auto t = d.order[d.offsets[e] + i].first;
    std::copy(x.row(t).begin(), x.row(t).end(), out.row(i).begin());
  }
  return out;
}

struct MoeOutput {
  Matrix y;
  RouterOutput route;
  Dispatch dispatch;
  std::vector<Matrix> expert_out;  // per expert, unscaled, in dispatch order
};

inline MoeOutput moe_layer_forward(const Matrix& x, const RouterState& router, const std::vector<ExpertWeights>& experts,
                                   const ModelConfig& cfg) {
  if (experts.size() != router.experts())
    throw ShapeError(zaya::detail::concat("moe: ", experts.size(), " experts but router has ", router.experts()));
  MoeOutput out;
  out.route = router_forward(x, router, cfg.k);
  out.dispatch = make_dispatch(out.route.chosen, experts.size());
  out.y = Matrix(x.rows(), x.cols());
  for (std::size_t e = 0; e < experts.size(); ++e) {
    out.expert_out.push_back(out.dispatch.tokens_for(e) ? expert_forward(experts[e], gather_rows(x, out.dispatch, e))
                                                        : Matrix(0, x.cols()));
    for (std::size_t i = 0; i < out.dispatch.tokens_for(e); ++i) {
      const auto [t, j] = out.dispatch.order[out.dispatch.offsets[e] + i];
      const double p = out.route.probs(t, j);
      for (std::size_t c = 0; c < x.cols(); ++c) out.y(t, c) += p * out.expert_out[e](i, c);
    }
  }
  return out;
}

struct MoeGrads {
  Matrix dx;
  RouterGrads router;
  std::vector<ExpertGrads> experts;  // dx inside is per dispatched row
};

inline MoeGrads moe_layer_backward(const Matrix& x, const RouterState& router, const std::vector<ExpertWeights>& experts,
                                   const MoeOutput& fwd, const Matrix& dy) {
  const auto& d = fwd.dispatch;
  Matrix dprobs(x.rows(), fwd.route.probs.cols());
  MoeGrads g;
  Matrix dx_experts(x.rows(), x.cols());
  for (std::size_t e = 0; e < experts.size(); ++e) {
    const std::size_t n = d.tokens_for(e);
    if (!n) {
      g.experts.push_back({Matrix(0, x.cols()), Matrix(experts[e].fc1.rows(), experts[e].fc1.cols()),
                           Matrix(experts[e].fc2.rows(), experts[e].fc2.cols())});
      continue;
    }
    Matrix dye(n, x.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const auto [t, j] = d.order[d.offsets[e] + i];
      double dot = 0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        dot += dy(t, c) * fwd.expert_out[e](i, c);
        dye(i, c) = fwd.route.probs(t, j) * dy(t, c);
      }
      dprobs(t, j) = dot;
    }
    g.experts.push_back(expert_backward(experts[e], gather_rows(x, d, e), dye));
    for (std::size_t i = 0; i < n; ++i) {
      const auto t = d.order[d.offsets[e] + i].first;
      for (std::size_t c = 0; c < x.cols(); ++c) dx_experts(t, c) += g.experts.back().dx(i, c);
    }
  }
  g.router = router_backward(x, router, fwd.route, dprobs);
  g.dx = dx_experts + g.router.dx;
  return g;
}

}  // namespace zaya::net
