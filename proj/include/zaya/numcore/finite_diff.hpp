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

#include <cmath>
#include <concepts>

#include "zaya/numcore/matrix.hpp"

namespace zaya {

/// Central-difference gradient of a scalar function, one element at a time.
template <typename F>
  requires std::invocable<F&, const Matrix&>
Matrix finite_diff_grad(F&& f, const Matrix& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be > 0");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.flat()[i];
    probe.flat()[i] = orig + h;
    const double fp = static_cast<double>(f(static_cast<const Matrix&>(probe)));
    probe.flat()[i] = orig - h;
    const double fm = static_cast<double>(f(static_cast<const Matrix&>(probe)));
    probe.flat()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError(detail::concat("finite_diff_grad: non-finite evaluation at element ", i));
    grad.flat()[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

inline double sum(const Matrix& m) {
  double s = 0.0;
  for (double x : m.flat()) s += x;
  return s;
}

// Max elementwise |a-b| / max(1, |b|): relative for large entries, absolute
// near zero.
inline double max_rel_error(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_rel_error: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(1.0, std::abs(b.flat()[i]));
    m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]) / denom);
  }
  return m;
}

}  // namespace zaya
