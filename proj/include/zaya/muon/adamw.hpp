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
#include <span>
#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya::muon {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<double> m1;
  std::vector<double> m2;  // >= 0 elementwise
  long step = 0;
  AdamWHyper hyper{};

  static AdamWState zeros(std::size_t n, AdamWHyper h = {}) { return {std::vector<double>(n), std::vector<double>(n), 0, h}; }
};

/// Elementwise kernel on a slice. `step` is the 1-based step number used for
/// bias correction; callers advance it once per optimizer step.
inline void adamw_update(std::span<double> w, std::span<const double> g, std::span<double> m1, std::span<double> m2,
                         long step, const AdamWHyper& h, double eta, double delta) {
  if (w.size() != g.size() || m1.size() != g.size() || m2.size() != g.size())
    throw ShapeError("adamw: buffer lengths differ");
  if (step < 1) throw ConfigError("adamw: step must be >= 1");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]) || !std::isfinite(w[i])) throw NumericError("adamw: non-finite input");
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < g.size(); ++i) {
    m1[i] = h.beta1 * m1[i] + (1.0 - h.beta1) * g[i];
    m2[i] = h.beta2 * m2[i] + (1.0 - h.beta2) * g[i] * g[i];
    w[i] *= 1.0 - eta * delta;
    w[i] -= eta * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + h.eps);
  }
}

inline void adamw_step(AdamWState& state, Matrix& w, const Matrix& g, double eta, double delta) {
  if (!w.same_shape(g) || state.m1.size() != w.size()) throw ShapeError("adamw_step: shape mismatch");
  ++state.step;
  adamw_update(w.flat(), g.flat(), state.m1, state.m2, state.step, state.hyper, eta, delta);
}

}  // namespace zaya::muon
