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

// Two-parameter transfer model T(m) = alpha + m / beta, its least-squares
// fit, and the fusion buffer size that just reaches saturation.

#include <cmath>
#include <utility>
#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya::perf {

struct CostSample {
  double bytes = 0;
  double seconds = 0;
};
using CostSamples = std::vector<CostSample>;

struct AlphaBeta {
  double alpha = 0;  // seconds
  double beta = 0;   // bytes/s
  double raw_alpha = 0;  // before clamping; < 0 flags bad samples
  bool alpha_clamped() const noexcept { return raw_alpha < 0; }
  double predict(double bytes) const noexcept { return alpha + bytes / beta; }
};

inline AlphaBeta fit_alpha_beta(const CostSamples& samples) {
  if (samples.size() < 2) throw ConfigError("fit_alpha_beta: need at least two samples");
  double mx = 0, my = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.bytes) || !std::isfinite(s.seconds) || s.bytes < 0 || s.seconds < 0)
      throw ConfigError("fit_alpha_beta: samples must be finite and non-negative");
    mx += s.bytes;
    my += s.seconds;
  }
  mx /= double(samples.size());
  my /= double(samples.size());
  double sxx = 0, sxy = 0;
  for (const auto& s : samples) {
    sxx += (s.bytes - mx) * (s.bytes - mx);
    sxy += (s.bytes - mx) * (s.seconds - my);
  }
  if (sxx <= 0) throw ConfigError("fit_alpha_beta: samples need at least two distinct message sizes");
  const double slope = sxy / sxx;
  if (!(slope > 0)) throw NumericError("fit_alpha_beta: time does not grow with message size");
  AlphaBeta ab;
  ab.raw_alpha = my - slope * mx;
  ab.alpha = std::max(0.0, ab.raw_alpha);
  ab.beta = 1.0 / slope;
  return ab;
}

/// Bandwidth actually achieved for one message of m bytes.
inline double achieved_bw(double alpha, double beta, double m) { return m > 0 ? m / (alpha + m / beta) : 0.0; }

/// Smallest message reaching (1 - eps) of the asymptotic bandwidth:
/// m* = alpha * beta * (1 - eps) / eps.
inline double fusion_buffer_size(double alpha, double beta, double epsilon = 0.05) {
  if (!(epsilon > 0 && epsilon < 1)) throw ConfigError("fusion_buffer_size: epsilon must be in (0, 1)");
  if (alpha < 0 || !(beta > 0)) throw ConfigError("fusion_buffer_size: need alpha >= 0 and beta > 0");
  return alpha * beta * (1.0 - epsilon) / epsilon;
}

}  // namespace zaya::perf
