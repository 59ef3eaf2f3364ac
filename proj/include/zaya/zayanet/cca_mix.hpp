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

// CCA-lite sequence mixing: compressed q/k/v projections, the two-stage
// causal conv over the concatenated q|k channels (one group per head), and a
// one-token delay on the second value stream.

#include "zaya/zayanet/cca_conv.hpp"
#include "zaya/zayanet/config.hpp"

namespace zaya::net {

struct CcaMixParams {
  Matrix Wq, Wk, Wv1, Wv2;  // h x (a_q d_h), h x (g d_h), h x (g d_h / 2) twice
  CcaConvParams conv;       // channels (a_q + g) d_h, groups a_q + g

  template <class Rng>
  static CcaMixParams random(const ModelConfig& c, Rng& rng) {
    c.validate();
    const std::size_t dh = c.d_h(), vh = c.g * dh / 2;
    const double s = 1.0 / std::sqrt(double(c.h));
    if (vh == 0) throw ConfigError("cca_mix: g*d_h must be >= 2 to split the value streams");
    return {Matrix::gaussian(c.h, c.a_q * dh, rng, s), Matrix::gaussian(c.h, c.g * dh, rng, s),
            Matrix::gaussian(c.h, vh, rng, s), Matrix::gaussian(c.h, vh, rng, s),
            CcaConvParams::random((c.a_q + c.g) * dh, c.a_q + c.g, rng, c.k0, c.k1)};
  }
};

struct CcaMixOut {
  Matrix q, k, v1, v2;
};

namespace detail {

inline Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + a.cols());
  }
  return out;
}

inline Matrix cols(const Matrix& m, std::size_t begin, std::size_t n) {
  Matrix out(m.rows(), n);
  for (std::size_t r = 0; r < m.rows(); ++r) std::copy_n(m.row(r).begin() + begin, n, out.row(r).begin());
  return out;
}

}  // namespace detail

inline CcaMixOut cca_mix(const Matrix& x, const CcaMixParams& p) {
  p.conv.validate();
  if (x.rows() < p.conv.k0 + p.conv.k1 - 1)
    throw ConfigError(zaya::detail::concat("cca_mix: sequence of ", x.rows(), " tokens is shorter than the receptive field ",
                                           p.conv.k0 + p.conv.k1 - 1));
  if (p.Wq.cols() + p.Wk.cols() != p.conv.channels) throw ShapeError("cca_mix: conv channels != q + k width");
  const Matrix qk = cca_conv_serial(p.conv, detail::hcat(gemm(x, p.Wq), gemm(x, p.Wk)));
  return {detail::cols(qk, 0, p.Wq.cols()), detail::cols(qk, p.Wq.cols(), p.Wk.cols()), gemm(x, p.Wv1),
          shift_right(gemm(x, p.Wv2))};
}

struct CcaMixGrads {
  Matrix dx, dWq, dWk, dWv1, dWv2, dw0, dw1;
};

inline CcaMixGrads cca_mix_backward(const Matrix& x, const CcaMixParams& p, const CcaMixOut& dout) {
  const Matrix pre = detail::hcat(gemm(x, p.Wq), gemm(x, p.Wk));
  const std::size_t H = p.conv.halo();
  auto cg = cca_conv_backward(p.conv, extend({}, pre, H), detail::hcat(dout.q, dout.k));
  // drop the zero-padding rows
  Matrix dqk(pre.rows(), pre.cols());
  std::copy(cg.dx_ext.flat().begin() + H * pre.cols(), cg.dx_ext.flat().end(), dqk.flat().begin());
  const Matrix dq = detail::cols(dqk, 0, p.Wq.cols()), dk = detail::cols(dqk, p.Wq.cols(), p.Wk.cols());
  const Matrix dv2 = shift_right_backward(dout.v2);

  CcaMixGrads g;
  g.dWq = gemm(x, dq, true);
  g.dWk = gemm(x, dk, true);
  g.dWv1 = gemm(x, dout.v1, true);
  g.dWv2 = gemm(x, dv2, true);
  g.dx = gemm(dq, p.Wq, false, true) + gemm(dk, p.Wk, false, true) + gemm(dout.v1, p.Wv1, false, true) +
         gemm(dv2, p.Wv2, false, true);
  g.dw0 = std::move(cg.dw0);
  g.dw1 = std::move(cg.dw1);
  return g;
}

}  // namespace zaya::net
