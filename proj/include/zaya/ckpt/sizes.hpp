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

// Checkpoint size model. With P = P_M + P_A parameters (Muon / AdamW),
// low-precision weight bytes b_lp and high-precision state bytes b_hp:
//
//   S_total   = P*b_lp + 2*P_M*b_hp + 3*P_A*b_hp + sum_r m_r
//   S_rank0   = P*b_lp + (2*P_M + 3*P_A)*b_hp/dp + m_0
//   S_rank_r  =          (2*P_M + 3*P_A)*b_hp/dp + m_r
//
// Muon keeps master + momentum, AdamW keeps master + m1 + m2.

#include <numeric>
#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya::ckpt {

struct CheckpointSizes {
  double total = 0;
  std::vector<double> per_rank;  // per_rank[0] includes the weights file

  double rank0() const { return per_rank.at(0); }
};

inline CheckpointSizes checkpoint_sizes(double p_muon, double p_adamw, double b_lp, double b_hp, int dp_degree,
                                        const std::vector<double>& m_r = {}) {
  if (p_muon < 0 || p_adamw < 0 || b_lp < 0 || b_hp < 0) throw ConfigError("checkpoint_sizes: counts must be >= 0");
  if (dp_degree < 1) throw ConfigError("checkpoint_sizes: dp_degree must be >= 1");
  if (!m_r.empty() && m_r.size() != static_cast<std::size_t>(dp_degree))
    throw ConfigError("checkpoint_sizes: need one metadata size per rank");
  auto meta = [&](int r) { return m_r.empty() ? 0.0 : m_r[r]; };
  const double state = (2.0 * p_muon + 3.0 * p_adamw) * b_hp;
  const double weights = (p_muon + p_adamw) * b_lp;
  CheckpointSizes s;
  s.total = weights + state + std::accumulate(m_r.begin(), m_r.end(), 0.0);
  for (int r = 0; r < dp_degree; ++r) s.per_rank.push_back((r == 0 ? weights : 0.0) + state / dp_degree + meta(r));
  return s;
}

/// Exact bytes of one rank's optimizer payload given its local element counts.
inline std::size_t shard_payload_bytes(std::size_t local_muon, std::size_t local_adamw, std::size_t b_hp) {
  return (2 * local_muon + 3 * local_adamw) * b_hp;
}

}  // namespace zaya::ckpt
