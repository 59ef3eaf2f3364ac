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

// Page-granular data-loader IOPS planning.
//
//   pages/iter  N      = sigma * ceil(G s b / P)
//   IOPS needed        = N / t
//   t_break            = N / I_max      (fastest iteration the budget allows)
//   sigma estimate     = 1 + m P / (s b)

#include <cmath>

#include "zaya/numcore/matrix.hpp"

namespace zaya::perf {

struct StoragePlan {
  double G = 0;        // global batch, sequences
  double s = 0;        // tokens per sequence
  double b = 0;        // bytes per token
  double P = 4096;     // page size, bytes
  double t = 1;        // iteration time, seconds
  double I_max = 1;    // IOPS budget
  double sigma = 1;    // scatter factor
  double m = 0;        // extra page faults per sample

  void validate() const {
    if (!(G >= 0 && s > 0 && b > 0 && P > 0 && t > 0 && I_max > 0 && m >= 0))
      throw ConfigError("storage_plan: G, m must be >= 0 and s, b, P, t, I_max > 0");
    if (!(sigma >= 1)) throw ConfigError("storage_plan: sigma must be >= 1");
  }
};

struct StorageReport {
  double bytes_per_iter = 0;
  double pages_per_iter = 0;
  double iops_needed = 0;
  double t_break = 0;
  double sigma_est = 1;
  double t_iter = 0;
  // the planned iteration is no faster than the budget allows
  bool feasible() const noexcept { return t_break <= t_iter; }
};

inline StorageReport storage_plan(const StoragePlan& p) {
  p.validate();
  StorageReport r;
  r.bytes_per_iter = p.G * p.s * p.b;
  const double pages = std::ceil(r.bytes_per_iter / p.P);
  r.pages_per_iter = p.sigma * pages;
  r.iops_needed = r.pages_per_iter / p.t;
  r.t_break = r.pages_per_iter / p.I_max;
  r.sigma_est = 1.0 + p.m * p.P / (p.s * p.b);
  r.t_iter = p.t;
  return r;
}

}  // namespace zaya::perf
