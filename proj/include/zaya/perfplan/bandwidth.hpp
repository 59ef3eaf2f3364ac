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

#include <algorithm>
#include <string>

#include "zaya/numcore/matrix.hpp"

namespace zaya::perf {

/// Intra-node interconnect style: a full switch gives every GPU the same
/// bandwidth regardless of group size; point-to-point xGMI links only add up
/// when all peers take part.
enum class IntraMode { switched, xgmi };

inline IntraMode parse_intra_mode(const std::string& s) {
  if (s == "xgmi") return IntraMode::xgmi;
  if (s == "switched") return IntraMode::switched;
  throw ConfigError("unknown intra-node mode '" + s + "' (expected xgmi or switched)");
}

inline const char* to_string(IntraMode m) { return m == IntraMode::xgmi ? "xgmi" : "switched"; }

/// Achievable per-GPU intra-node bandwidth with n participating GPUs.
/// xgmi: (n-1) * link_bw for 1 <= n <= 8, capped at b_max when b_max > 0.
/// switched: b_max.
inline double xgmi_bw(int n, double link_bw, IntraMode mode = IntraMode::xgmi, double b_max = 0.0) {
  if (mode == IntraMode::switched) return b_max;
  if (n < 1 || n > 8) throw ConfigError(detail::concat("xgmi_bw: n must be in [1, 8], got ", n));
  const double links = static_cast<double>(n - 1) * link_bw;
  return b_max > 0.0 ? std::min(links, b_max) : links;
}

}  // namespace zaya::perf
