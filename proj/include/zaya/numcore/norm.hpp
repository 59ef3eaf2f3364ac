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

// Fused residual-add + LayerNorm/RMSNorm, forward and backward.
//
// Forward, per row of N elements:
//   v = x + residual;  residual_out = v
//   layernorm: vhat = (v - mean) * inv_std,  inv_std = 1/sqrt(var + eps)
//   rmsnorm:   vhat = v * inv_std,           inv_std = 1/sqrt(mean(v^2) + eps)
//   y = gamma * vhat + beta
//
// Backward, with S1 = sum(g*gamma), S2 = sum(g*gamma*vhat):
//   dv = inv_std/N * (N*g*gamma - S1 - vhat*S2)     (S1 term absent for rmsnorm)
// dv is the gradient with respect to both x and residual.

#include <cmath>
#include <span>
#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya {

enum class NormMode { layernorm, rmsnorm };

struct NormSaved {
  NormMode mode = NormMode::layernorm;
  double epsilon = 0.0;
  std::vector<double> mu;       // empty in rmsnorm mode
  std::vector<double> inv_std;  // one per row, > 0
};

struct NormForwardResult {
  Matrix y;
  Matrix residual_out;
  NormSaved saved;
};

struct NormBackwardResult {
  Matrix dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};

namespace detail {

// Single-pass Welford, combined strictly left to right.
template <typename Acc>
struct Welford {
  Acc mean = 0;
  Acc m2 = 0;
  std::size_t n = 0;

  void push(Acc x) {
    ++n;
    const Acc delta = x - mean;
    mean += delta / static_cast<Acc>(n);
    m2 += delta * (x - mean);
  }
  Acc variance() const { return n ? m2 / static_cast<Acc>(n) : Acc(0); }
};

inline void check_norm_args(const Matrix& x, const Matrix& residual, std::span<const double> gamma,
                            std::span<const double> beta, double epsilon) {
  if (!x.same_shape(residual)) throw ShapeError("norm_forward: x and residual differ in shape");
  if (gamma.size() != x.cols() || beta.size() != x.cols())
    throw ShapeError(detail::concat("norm_forward: gamma/beta length must be ", x.cols()));
  if (!(epsilon > 0.0)) throw ConfigError("norm_forward: epsilon must be > 0");
}

}  // namespace detail

/// Fused residual add + normalization. `Acc` is the accumulation type; the
/// returned matrices hold values representable in `Acc`.
template <typename Acc = double>
NormForwardResult norm_forward(const Matrix& x, const Matrix& residual, std::span<const double> gamma,
                               std::span<const double> beta, double epsilon, NormMode mode) {
  detail::check_norm_args(x, residual, gamma, beta, epsilon);
  const std::size_t rows = x.rows(), n = x.cols();

  NormForwardResult out{Matrix(rows, n), Matrix(rows, n), NormSaved{mode, epsilon, {}, {}}};
  if (mode == NormMode::layernorm) out.saved.mu.resize(rows);
  out.saved.inv_std.resize(rows);

  std::vector<Acc> v(n);
  for (std::size_t r = 0; r < rows; ++r) {
    detail::Welford<Acc> stats;
    Acc sumsq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<Acc>(x(r, i)) + static_cast<Acc>(residual(r, i));
      out.residual_out(r, i) = static_cast<double>(v[i]);
      if (mode == NormMode::layernorm)
        stats.push(v[i]);
      else
        sumsq += v[i] * v[i];
    }
    const Acc eps = static_cast<Acc>(epsilon);
    Acc mean = 0, inv_std;
    if (mode == NormMode::layernorm) {
      mean = stats.mean;
      inv_std = Acc(1) / std::sqrt(stats.variance() + eps);
      out.saved.mu[r] = static_cast<double>(mean);
    } else {
      inv_std = Acc(1) / std::sqrt(sumsq / static_cast<Acc>(n) + eps);
    }
    out.saved.inv_std[r] = static_cast<double>(inv_std);
    for (std::size_t i = 0; i < n; ++i) {
      const Acc vhat = (v[i] - mean) * inv_std;
      out.y(r, i) = static_cast<double>(static_cast<Acc>(gamma[i]) * vhat + static_cast<Acc>(beta[i]));
    }
  }
  return out;
}

/// `residual_out` is the forward's v = x + residual; vhat is rebuilt from it
/// and the saved statistics.
template <typename Acc = double>
NormBackwardResult norm_backward(const Matrix& g, const NormSaved& saved, const Matrix& residual_out,
                                 std::span<const double> gamma) {
  const std::size_t rows = g.rows(), n = g.cols();
  if (!g.same_shape(residual_out)) throw ShapeError("norm_backward: g and saved input differ in shape");
  if (saved.inv_std.size() != rows) throw ShapeError("norm_backward: saved state row count mismatch");
  if (saved.mode == NormMode::layernorm && saved.mu.size() != rows)
    throw ShapeError("norm_backward: layernorm state is missing the row means");
  if (gamma.size() != n) throw ShapeError("norm_backward: gamma length mismatch");

  NormBackwardResult out{Matrix(rows, n), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  std::vector<Acc> vhat(n), ggamma(n);
  const Acc count = static_cast<Acc>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const Acc inv_std = static_cast<Acc>(saved.inv_std[r]);
    const Acc mean = saved.mode == NormMode::layernorm ? static_cast<Acc>(saved.mu[r]) : Acc(0);
    Acc s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      vhat[i] = (static_cast<Acc>(residual_out(r, i)) - mean) * inv_std;
      ggamma[i] = static_cast<Acc>(g(r, i)) * static_cast<Acc>(gamma[i]);
      s1 += ggamma[i];
      s2 += ggamma[i] * vhat[i];
      out.dgamma[i] += g(r, i) * static_cast<double>(vhat[i]);
      out.dbeta[i] += g(r, i);
    }
    if (saved.mode == NormMode::rmsnorm) s1 = 0;
    for (std::size_t i = 0; i < n; ++i)
      out.dx(r, i) = static_cast<double>(inv_std / count * (count * ggamma[i] - s1 - vhat[i] * s2));
  }
  return out;
}

/// 32-bit compute with bf16 inputs and outputs.
inline NormForwardResult norm_forward_bf16(const Matrix& x, const Matrix& residual, std::span<const double> gamma,
                                           std::span<const double> beta, double epsilon, NormMode mode) {
  auto out = norm_forward<float>(round_to_bf16(x), round_to_bf16(residual), gamma, beta, epsilon, mode);
  out.y = round_to_bf16(out.y);
  out.residual_out = round_to_bf16(out.residual_out);
  return out;
}

}  // namespace zaya
