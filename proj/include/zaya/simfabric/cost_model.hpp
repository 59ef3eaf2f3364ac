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

// alpha-beta transfer-time model for ring collectives.
//
//   T       = alpha + bytes * factor / beta_eff
//   algbw   = bytes / T
//   busbw   = algbw * factor
//
// factor is the per-rank byte multiplier of the ring algorithm
// (allreduce 2(n-1)/n; allgather, reducescatter, alltoall (n-1)/n;
// broadcast 1). beta_eff is the configured asymptotic bandwidth capped by the
// link ceiling of the scope: xGMI (n-1)*B_link or switched B_max inside a
// node, the per-rank NIC bandwidth across nodes.

#include <algorithm>
#include <limits>
#include <map>
#include <utility>

#include "zaya/perfplan/bandwidth.hpp"
#include "zaya/simfabric/collectives.hpp"

namespace zaya::sim {

enum class Scope { intra, inter };

inline const char* to_string(Scope s) { return s == Scope::intra ? "intra" : "inter"; }

struct FabricTopology {
  int ranks_per_node = 8;
  int nodes = 1;
  double link_bw_intra = 64e9;  // B_link, bytes/s per xGMI link
  double bw_max_intra = 450e9;  // B_max for switched mode
  double nic_bw = 50e9;         // 400 Gbps per rank
  perf::IntraMode mode = perf::IntraMode::xgmi;
  double alpha_intra = 10e-6;
  double alpha_inter = 20e-6;
  // Extra per-message latency for traffic that leaves its rail (spine hop).
  double cross_rail_alpha = 20e-6;
  // Optional measured asymptotic bandwidth per (kind, scope); capped by the
  // link ceiling. Missing entries mean "the ceiling".
  std::map<std::pair<CollectiveKind, Scope>, double> beta;

  int total_ranks() const noexcept { return ranks_per_node * nodes; }

  void validate() const {
    if (ranks_per_node < 1 || nodes < 1) throw ConfigError("topology: ranks_per_node and nodes must be >= 1");
    if (mode == perf::IntraMode::xgmi && ranks_per_node > 8)
      throw ConfigError("topology: xgmi mode supports at most 8 ranks per node");
    if (!(link_bw_intra > 0 && bw_max_intra > 0 && nic_bw > 0)) throw ConfigError("topology: bandwidths must be > 0");
    if (alpha_intra < 0 || alpha_inter < 0 || cross_rail_alpha < 0) throw ConfigError("topology: latencies must be >= 0");
    for (const auto& [k, v] : beta)
      if (!(v > 0)) throw ConfigError("topology: beta entries must be > 0");
  }
};

struct CostEstimate {
  double seconds = 0;
  double algbw = 0;
  double busbw = 0;
  double beta_eff = 0;
  double factor = 0;
  Scope scope = Scope::intra;
};

inline double bus_factor(CollectiveKind kind, int n) {
  if (n <= 1) return 0.0;
  const double nn = n;
  switch (kind) {
    case CollectiveKind::allreduce: return 2.0 * (nn - 1) / nn;
    case CollectiveKind::allgather:
    case CollectiveKind::reducescatter:
    case CollectiveKind::alltoall: return (nn - 1) / nn;
    case CollectiveKind::broadcast: return 1.0;
  }
  throw ConfigError("unknown collective kind");
}

inline double link_ceiling(const FabricTopology& topo, Scope scope, int n_ranks) {
  if (scope == Scope::inter) return topo.nic_bw;
  return perf::xgmi_bw(std::min(n_ranks, topo.ranks_per_node), topo.link_bw_intra, topo.mode, topo.bw_max_intra);
}

inline CostEstimate predict_time(const FabricTopology& topo, CollectiveKind kind, double msg_bytes, int n_ranks,
                                 bool cross_rail = false) {
  topo.validate();
  if (msg_bytes < 0) throw ConfigError("predict_time: message size must be >= 0");
  if (n_ranks < 1 || n_ranks > topo.total_ranks())
    throw ConfigError(zaya::detail::concat("predict_time: n_ranks must be in [1, ", topo.total_ranks(), "]"));

  CostEstimate est;
  est.scope = n_ranks <= topo.ranks_per_node ? Scope::intra : Scope::inter;
  est.factor = bus_factor(kind, n_ranks);
  est.beta_eff = link_ceiling(topo, est.scope, n_ranks);
  if (auto it = topo.beta.find({kind, est.scope}); it != topo.beta.end()) est.beta_eff = std::min(est.beta_eff, it->second);

  double alpha = est.scope == Scope::intra ? topo.alpha_intra : topo.alpha_inter;
  if (est.scope == Scope::inter && cross_rail) alpha += topo.cross_rail_alpha;
  est.seconds = alpha + (est.factor > 0 && msg_bytes > 0 ? msg_bytes * est.factor / est.beta_eff : 0.0);
  est.algbw = est.seconds > 0 ? msg_bytes / est.seconds : std::numeric_limits<double>::infinity();
  est.busbw = est.algbw * est.factor;
  return est;
}

}  // namespace zaya::sim
