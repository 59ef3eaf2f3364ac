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

// Blockwise causal attention with online softmax. Rows of q/k/v are tokens,
// columns are heads * head_dim. A query at global position i sees keys at
// positions <= i.
//
// fold() merges one key/value block into the running (max, denominator,
// numerator) state; finalize() divides through and records the per-row
// log-sum-exp that the backward pass needs.

#include <cmath>
#include <limits>
#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya::cpar {

struct OnlineSoftmax {
  std::size_t heads = 1;
  Matrix m;    // rows x heads, running max
  Matrix l;    // rows x heads, running denominator
  Matrix acc;  // rows x (heads*dh)

  OnlineSoftmax(std::size_t rows, std::size_t heads_, std::size_t width)
      : heads(heads_), m(rows, heads_, -std::numeric_limits<double>::infinity()), l(rows, heads_), acc(rows, width) {}
};

struct AttnOut {
  Matrix o;
  Matrix lse;  // rows x heads
};

namespace detail {

inline void check_heads(const Matrix& x, std::size_t heads) {
  if (heads == 0 || x.cols() % heads != 0) throw ShapeError("attention: width must be a multiple of the head count");
}

inline double dot_head(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j, std::size_t h, std::size_t dh) {
  double s = 0;
  for (std::size_t d = 0; d < dh; ++d) s += a(i, h * dh + d) * b(j, h * dh + d);
  return s;
}

}  // namespace detail

inline void fold(OnlineSoftmax& st, const Matrix& q, const std::vector<std::size_t>& q_pos, const Matrix& k,
                 const Matrix& v, const std::vector<std::size_t>& k_pos) {
  detail::check_heads(q, st.heads);
  if (k.cols() != q.cols() || v.cols() != q.cols() || k.rows() != v.rows() || k.rows() != k_pos.size() ||
      q.rows() != q_pos.size())
    throw ShapeError("attention: q/k/v shapes disagree");
  const std::size_t dh = q.cols() / st.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> s(k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t h = 0; h < st.heads; ++h) {
      double bmax = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k.rows(); ++j) {
        if (k_pos[j] > q_pos[i]) continue;
        s[j] = scale * detail::dot_head(q, i, k, j, h, dh);
        if (!std::isfinite(s[j])) throw NumericError("attention: non-finite score");
        bmax = std::max(bmax, s[j]);
      }
      if (bmax == -std::numeric_limits<double>::infinity()) continue;  // block fully masked
      const double m_new = std::max(st.m(i, h), bmax);
      const double corr = std::exp(st.m(i, h) - m_new);  // 0 on the first visible block
      st.l(i, h) *= corr;
      for (std::size_t d = 0; d < dh; ++d) st.acc(i, h * dh + d) *= corr;
      for (std::size_t j = 0; j < k.rows(); ++j) {
        if (k_pos[j] > q_pos[i]) continue;
        const double p = std::exp(s[j] - m_new);
        st.l(i, h) += p;
        for (std::size_t d = 0; d < dh; ++d) st.acc(i, h * dh + d) += p * v(j, h * dh + d);
      }
      st.m(i, h) = m_new;
    }
}

inline AttnOut finalize(const OnlineSoftmax& st) {
  const std::size_t dh = st.acc.cols() / st.heads;
  AttnOut out{Matrix(st.acc.rows(), st.acc.cols()), Matrix(st.acc.rows(), st.heads)};
  for (std::size_t i = 0; i < st.acc.rows(); ++i)
    for (std::size_t h = 0; h < st.heads; ++h) {
      if (!(st.l(i, h) > 0)) throw NumericError("attention: query row saw no keys");
      for (std::size_t d = 0; d < dh; ++d) out.o(i, h * dh + d) = st.acc(i, h * dh + d) / st.l(i, h);
      out.lse(i, h) = st.m(i, h) + std::log(st.l(i, h));
    }
  return out;
}

/// rowdot(i,h) = sum_d dO(i,h,d) * O(i,h,d).
inline Matrix attention_rowdot(const Matrix& o, const Matrix& d_o, std::size_t heads) {
  detail::check_heads(o, heads);
  const std::size_t dh = o.cols() / heads;
  Matrix r(o.rows(), heads);
  for (std::size_t i = 0; i < o.rows(); ++i)
    for (std::size_t h = 0; h < heads; ++h) r(i, h) = detail::dot_head(o, i, d_o, i, h, dh);
  return r;
}

/// Accumulate gradients of one (query block, key block) pair.
inline void attention_block_backward(const Matrix& q, const std::vector<std::size_t>& q_pos, const Matrix& k,
                                     const Matrix& v, const std::vector<std::size_t>& k_pos, const Matrix& d_o,
                                     const Matrix& lse, const Matrix& rowdot, std::size_t heads, Matrix& dq, Matrix& dk,
                                     Matrix& dv) {
  detail::check_heads(q, heads);
  const std::size_t dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t j = 0; j < k.rows(); ++j) {
        if (k_pos[j] > q_pos[i]) continue;
        const double p = std::exp(scale * detail::dot_head(q, i, k, j, h, dh) - lse(i, h));
        const double dp = detail::dot_head(d_o, i, v, j, h, dh);
        const double ds = p * (dp - rowdot(i, h)) * scale;
        for (std::size_t d = 0; d < dh; ++d) {
          dv(j, h * dh + d) += p * d_o(i, h * dh + d);
          dq(i, h * dh + d) += ds * k(j, h * dh + d);
          dk(j, h * dh + d) += ds * q(i, h * dh + d);
        }
      }
}

/// Single-block causal attention over a whole sequence.
inline AttnOut causal_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads) {
  std::vector<std::size_t> pos(q.rows());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  OnlineSoftmax st(q.rows(), heads, q.cols());
  fold(st, q, pos, k, v, pos);
  return finalize(st);
}

}  // namespace zaya::cpar
