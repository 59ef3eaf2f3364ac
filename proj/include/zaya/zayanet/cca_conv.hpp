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

// The two causal sequence convolutions of CCA, applied to the concatenated
// q|k channels:
//   s1[t][c] = sum_j w0(c, j)                 * x [t - (k0-1) + j][c]        (depthwise)
//   y [t][c] = sum_i sum_j w1(c, i*k1 + j)    * s1[t - (k1-1) + j][grp(c) + i] (grouped)
// Both are causal, so output t sees inputs back to t - halo(),
// halo() = (k0-1) + (k1-1).
//
// Kernels work on an "extended" input whose first halo() rows are the tokens
// preceding the chunk (zeros at the start of the sequence).

#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya::net {

struct CcaConvParams {
  std::size_t channels = 0;
  std::size_t groups = 1;
  std::size_t k0 = 2;
  std::size_t k1 = 2;
  Matrix w0;  // channels x k0
  Matrix w1;  // channels x (channels/groups * k1)

  std::size_t halo() const noexcept { return (k0 - 1) + (k1 - 1); }
  std::size_t per_group() const noexcept { return channels / groups; }

  void validate() const {
    if (channels == 0 || groups == 0 || channels % groups != 0)
      throw ConfigError("cca conv: channels must be a positive multiple of groups");
    if (k0 == 0 || k1 == 0) throw ConfigError("cca conv: kernel widths must be >= 1");
    if (w0.rows() != channels || w0.cols() != k0) throw ShapeError("cca conv: w0 must be channels x k0");
    if (w1.rows() != channels || w1.cols() != per_group() * k1)
      throw ShapeError("cca conv: w1 must be channels x (channels/groups * k1)");
  }

  /// Taps that pass the current token through unchanged.
  static CcaConvParams identity(std::size_t channels, std::size_t groups, std::size_t k0 = 2, std::size_t k1 = 2) {
    CcaConvParams p{channels, groups, k0, k1, Matrix(channels, k0), Matrix(channels, channels / groups * k1)};
    for (std::size_t c = 0; c < channels; ++c) {
      p.w0(c, k0 - 1) = 1.0;
      p.w1(c, (c % p.per_group()) * k1 + k1 - 1) = 1.0;
    }
    return p;
  }

  template <class Rng>
  static CcaConvParams random(std::size_t channels, std::size_t groups, Rng& rng, std::size_t k0 = 2,
                              std::size_t k1 = 2) {
    CcaConvParams p{channels, groups, k0, k1, Matrix::gaussian(channels, k0, rng, 0.5),
                    Matrix::gaussian(channels, channels / groups * k1, rng, 0.5)};
    p.validate();
    return p;
  }
};

struct ConvGrads {
  Matrix dx_ext;  // same rows as the extended input
  Matrix dw0;
  Matrix dw1;
};

namespace detail {

inline Matrix depthwise_stage(const CcaConvParams& p, const Matrix& x_ext) {
  Matrix s1(x_ext.rows(), p.channels);
  for (std::size_t t = p.k0 - 1; t < x_ext.rows(); ++t)
    for (std::size_t c = 0; c < p.channels; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < p.k0; ++j) acc += p.w0(c, j) * x_ext(t - (p.k0 - 1) + j, c);
      s1(t, c) = acc;
    }
  return s1;
}

inline void check_ext(const CcaConvParams& p, const Matrix& x_ext) {
  p.validate();
  if (x_ext.cols() != p.channels) throw ShapeError("cca conv: input width differs from channels");
  if (x_ext.rows() < p.halo()) throw ShapeError("cca conv: extended input shorter than the halo");
}

}  // namespace detail

/// Output rows = x_ext.rows() - halo().
inline Matrix cca_conv_forward(const CcaConvParams& p, const Matrix& x_ext) {
  detail::check_ext(p, x_ext);
  const Matrix s1 = detail::depthwise_stage(p, x_ext);
  const std::size_t H = p.halo(), T = x_ext.rows() - H, G = p.per_group();
  Matrix y(T, p.channels);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < p.channels; ++c) {
      const std::size_t base = c / G * G;
      double acc = 0;
      for (std::size_t i = 0; i < G; ++i)
        for (std::size_t j = 0; j < p.k1; ++j) acc += p.w1(c, i * p.k1 + j) * s1(H + t - (p.k1 - 1) + j, base + i);
      y(t, c) = acc;
    }
  return y;
}

inline ConvGrads cca_conv_backward(const CcaConvParams& p, const Matrix& x_ext, const Matrix& dy) {
  detail::check_ext(p, x_ext);
  const std::size_t H = p.halo(), T = x_ext.rows() - H, G = p.per_group();
  if (dy.rows() != T || dy.cols() != p.channels) throw ShapeError("cca conv backward: dy shape mismatch");
  const Matrix s1 = detail::depthwise_stage(p, x_ext);
  ConvGrads g{Matrix(x_ext.rows(), p.channels), Matrix(p.channels, p.k0), Matrix(p.channels, G * p.k1)};
  Matrix ds1(x_ext.rows(), p.channels);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < p.channels; ++c) {
      const std::size_t base = c / G * G;
      const double d = dy(t, c);
      for (std::size_t i = 0; i < G; ++i)
        for (std::size_t j = 0; j < p.k1; ++j) {
          const std::size_t src = H + t - (p.k1 - 1) + j;
          g.dw1(c, i * p.k1 + j) += d * s1(src, base + i);
          ds1(src, base + i) += d * p.w1(c, i * p.k1 + j);
        }
    }
  for (std::size_t t = p.k0 - 1; t < x_ext.rows(); ++t)
    for (std::size_t c = 0; c < p.channels; ++c)
      for (std::size_t j = 0; j < p.k0; ++j) {
        const std::size_t xi = t - (p.k0 - 1) + j;
        g.dw0(c, j) += ds1(t, c) * x_ext(xi, c);
        g.dx_ext(xi, c) += ds1(t, c) * p.w0(c, j);
      }
  return g;
}

/// Prepend `halo` rows (zeros when empty) to x.
inline Matrix extend(const Matrix& halo_rows, const Matrix& x, std::size_t halo) {
  Matrix ext(halo + x.rows(), x.cols());
  if (halo_rows.size() != 0) {
    if (halo_rows.rows() != halo || halo_rows.cols() != x.cols()) throw ShapeError("extend: halo shape mismatch");
    std::copy(halo_rows.flat().begin(), halo_rows.flat().end(), ext.flat().begin());
  }
  std::copy(x.flat().begin(), x.flat().end(), ext.flat().begin() + static_cast<long>(halo * x.cols()));
  return ext;
}

/// Whole-sequence convolution with zero history.
inline Matrix cca_conv_serial(const CcaConvParams& p, const Matrix& x) { return cca_conv_forward(p, extend({}, x, p.halo())); }

/// One-token delay with zero left-padding.
inline Matrix shift_right(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  if (x.rows() > 1)
    std::copy(x.flat().begin(), x.flat().end() - static_cast<long>(x.cols()), y.flat().begin() + static_cast<long>(x.cols()));
  return y;
}

inline Matrix shift_right_backward(const Matrix& dy) {
  Matrix dx(dy.rows(), dy.cols());
  if (dy.rows() > 1)
    std::copy(dy.flat().begin() + static_cast<long>(dy.cols()), dy.flat().end(), dx.flat().begin());
  return dx;
}

}  // namespace zaya::net
