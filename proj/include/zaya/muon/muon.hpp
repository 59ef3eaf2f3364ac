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

// Muon split into its three passes:
//   1. momentum pass:  m = mu*m + g;  ns_in = m  (or g + mu*m with Nesterov)
//   2. Newton-Schulz:  X <- a*X + (b*A + c*A^2) X,  A = X X^T
//      where A and A^2 both come from the symmetric Gram kernel
//      (A^2 = A A^T because A is symmetric).
//   3. update:         w <- (1 - eta*delta) w;  w <- w - lambda * ns_out,
//                      lambda = eta * rms_match * sqrt(max(rows, cols))

#include <algorithm>
#include <cmath>
#include <span>

#include "zaya/numcore/matrix.hpp"

namespace zaya::muon {

struct NsCoefficients {
  double a = 3.4445;
  double b = -4.7750;
  double c = 2.0315;
  double sum() const noexcept { return a + b + c; }
};

struct MuonConfig {
  double mu = 0.95;
  bool nesterov = true;
  double eta = 0.02;
  double delta = 0.0;
  int ns_steps = 5;
  NsCoefficients ns_coeffs{};
  double rms_match_constant = 0.2;
  // Divide the NS input by (||X||_F + normalize_eps) before iterating.
  bool normalize_input = true;
  double normalize_eps = 1e-7;
  // Iterate on X^T when rows > cols so the Gram matrix is the smaller one.
  bool transpose_tall = true;
  std::size_t gram_tile = 16;
  // Round NS inputs to bf16, mirroring a bandwidth-reduced kernel.
  bool bf16_ns_input = false;

  void validate() const {
    if (ns_steps < 1) throw ConfigError("muon: ns_steps must be >= 1");
    if (!(eta > 0.0)) throw ConfigError("muon: eta must be > 0");
    if (!(mu >= 0.0 && mu < 1.0)) throw ConfigError("muon: mu must be in [0, 1)");
    if (delta < 0.0) throw ConfigError("muon: delta must be >= 0");
    if (gram_tile == 0) throw ConfigError("muon: gram_tile must be >= 1");
  }
};

/// Per-parameter state: momentum and master weights in full precision.
struct MuonState {
  Matrix momentum;
  Matrix master_weights;

  static MuonState for_weights(const Matrix& w) { return {Matrix(w.rows(), w.cols()), w}; }
};

// ----------------------------------------------------------------------------
// Pass 1: momentum

/// Elementwise kernel; operates on any contiguous slice of a parameter.
inline void momentum_pass(std::span<double> momentum, std::span<const double> g, std::span<double> ns_in,
                          const MuonConfig& cfg) {
  if (momentum.size() != g.size() || ns_in.size() != g.size())
    throw ShapeError("momentum_pass: buffer lengths differ");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i])) throw NumericError(detail::concat("momentum_pass: non-finite gradient at ", i));
  for (std::size_t i = 0; i < g.size(); ++i) {
    momentum[i] = cfg.mu * momentum[i] + g[i];
    double out = cfg.nesterov ? g[i] + cfg.mu * momentum[i] : momentum[i];
    ns_in[i] = cfg.bf16_ns_input ? round_to_bf16(out) : out;
  }
}

inline Matrix momentum_pass(MuonState& state, const Matrix& g, const MuonConfig& cfg) {
  if (!state.momentum.same_shape(g)) throw ShapeError("momentum_pass: gradient shape differs from momentum");
  Matrix ns_in(g.rows(), g.cols());
  momentum_pass(state.momentum.flat(), g.flat(), ns_in.flat(), cfg);
  return ns_in;
}

// ----------------------------------------------------------------------------
// Pass 2: Newton-Schulz on top of a symmetric Gram kernel

/// A = X X^T. Only tiles on or above the diagonal are evaluated; each computed
/// entry is stored at (i, j) and mirrored to (j, i), so the result is exactly
/// symmetric. Each entry accumulates over k in order, which matches gemm.
inline Matrix symmetric_gram(const Matrix& x, std::size_t tile = 16) {
  if (x.rows() == 0) throw ShapeError("symmetric_gram: X must have at least one row");
  if (tile == 0) throw ConfigError("symmetric_gram: tile must be >= 1");
  const std::size_t m = x.rows(), k = x.cols();
  Matrix a(m, m);
  for (std::size_t ti = 0; ti < m; ti += tile) {
    const std::size_t i_end = std::min(ti + tile, m);
    for (std::size_t tj = ti; tj < m; tj += tile) {
      const std::size_t j_end = std::min(tj + tile, m);
      for (std::size_t i = ti; i < i_end; ++i) {
        const auto xi = x.row(i);
        for (std::size_t j = std::max(tj, i); j < j_end; ++j) {
          const auto xj = x.row(j);
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += xi[p] * xj[p];
          a(i, j) = acc;
          a(j, i) = acc;
        }
      }
    }
  }
  return a;
}

/// One step: X <- a X + (b A + c A^2) X.
inline Matrix newton_schulz_step(const Matrix& x, const NsCoefficients& k, std::size_t tile = 16) {
  const Matrix a = symmetric_gram(x, tile);
  const Matrix a2 = symmetric_gram(a, tile);
  Matrix poly = a * k.b;
  for (std::size_t i = 0; i < poly.size(); ++i) poly.flat()[i] += k.c * a2.flat()[i];
  Matrix out = gemm(poly, x);
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] += k.a * x.flat()[i];
  return out;
}

inline Matrix newton_schulz(const Matrix& x_in, const MuonConfig& cfg) {
  cfg.validate();
  if (!x_in.all_finite()) throw NumericError("newton_schulz: non-finite input");
  const double fro = x_in.frobenius_norm();
  if (fro == 0.0) throw NumericError("newton_schulz: zero input matrix");

  const bool transpose = cfg.transpose_tall && x_in.rows() > x_in.cols();
  Matrix x = transpose ? x_in.transposed() : x_in;
  if (cfg.normalize_input) x *= 1.0 / (fro + cfg.normalize_eps);
  for (int s = 0; s < cfg.ns_steps; ++s) x = newton_schulz_step(x, cfg.ns_coeffs, cfg.gram_tile);
  return transpose ? x.transposed() : x;
}

// ----------------------------------------------------------------------------
// Pass 3: decoupled decay + scaled update

inline double update_scale(const MuonConfig& cfg, std::size_t rows, std::size_t cols) {
  return cfg.eta * cfg.rms_match_constant * std::sqrt(static_cast<double>(std::max(rows, cols)));
}

/// Slice kernel; `lambda` comes from update_scale on the full parameter shape.
inline void weight_update(std::span<double> w, std::span<const double> ns_out, double eta, double delta,
                          double lambda) {
  if (w.size() != ns_out.size()) throw ShapeError("weight_update: slice lengths differ");
  for (double v : ns_out)
    if (!std::isfinite(v)) throw NumericError("weight_update: non-finite NS output");
  const double decay = 1.0 - eta * delta;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] *= decay;
    w[i] -= lambda * ns_out[i];
  }
}

inline const Matrix& weight_update(MuonState& state, const Matrix& ns_out, const MuonConfig& cfg) {
  if (!state.master_weights.same_shape(ns_out)) throw ShapeError("weight_update: NS output shape differs");
  weight_update(state.master_weights.flat(), ns_out.flat(), cfg.eta, cfg.delta,
                update_scale(cfg, ns_out.rows(), ns_out.cols()));
  return state.master_weights;
}

/// Full single-parameter step: momentum -> NS -> update.
inline const Matrix& muon_step(MuonState& state, const Matrix& g, const MuonConfig& cfg) {
  const Matrix ns_in = momentum_pass(state, g, cfg);
  return weight_update(state, newton_schulz(ns_in, cfg), cfg);
}

}  // namespace zaya::muon
