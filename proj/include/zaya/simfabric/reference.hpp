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

// Run a collective across a whole fabric, and the central definition it must
// agree with.

#include <cmath>
#include <vector>

#include "zaya/simfabric/collectives.hpp"

namespace zaya::sim {

inline std::vector<Payload> run_collective(Fabric& fabric, CollectiveKind kind, const std::vector<Payload>& inputs,
                                           std::size_t root = 0) {
  const int n = fabric.world_size();
  if (static_cast<int>(inputs.size()) != n) throw ShapeError("run_collective: one input per rank required");
  std::vector<Payload> out(n);
  fabric.run([&](Comm& comm) -> Task<> {
    const Group g = whole_world(comm);
    Payload in = inputs[comm.rank()];
    switch (kind) {
      case CollectiveKind::allreduce: out[comm.rank()] = co_await allreduce(comm, g, std::move(in)); break;
      case CollectiveKind::allgather: out[comm.rank()] = co_await allgather(comm, g, std::move(in)); break;
      case CollectiveKind::reducescatter: out[comm.rank()] = co_await reducescatter(comm, g, std::move(in)); break;
      case CollectiveKind::alltoall: out[comm.rank()] = co_await alltoall(comm, g, std::move(in)); break;
      case CollectiveKind::broadcast: out[comm.rank()] = co_await broadcast(comm, g, root, std::move(in)); break;
    }
  });
  return out;
}

/// Mathematical definition of each collective, evaluated centrally.
inline std::vector<Payload> reference_collective(CollectiveKind kind, const std::vector<Payload>& in, std::size_t root = 0) {
  const std::size_t p = in.size();
  std::vector<Payload> out(p);
  const std::size_t n = in.empty() ? 0 : in[0].size();
  Payload total(n, 0.0);
  for (const auto& v : in)
    for (std::size_t i = 0; i < n; ++i) total[i] += v[i];
  for (std::size_t r = 0; r < p; ++r) {
    switch (kind) {
      case CollectiveKind::allreduce: out[r] = total; break;
      case CollectiveKind::allgather:
        for (const auto& v : in) out[r].insert(out[r].end(), v.begin(), v.end());
        break;
      case CollectiveKind::reducescatter: {
        const auto [b, e] = detail::chunk_bounds(n, p, r);
        out[r].assign(total.begin() + b, total.begin() + e);
        break;
      }
      case CollectiveKind::alltoall: {
        const std::size_t c = n / p;
        for (std::size_t j = 0; j < p; ++j) out[r].insert(out[r].end(), in[j].begin() + r * c, in[j].begin() + (r + 1) * c);
        break;
      }
      case CollectiveKind::broadcast: out[r] = in[root]; break;
    }
  }
  return out;
}

/// Max |a-b| / max(1,|b|) across all ranks; infinity on a shape mismatch.
inline double collective_error(const std::vector<Payload>& got, const std::vector<Payload>& want) {
  if (got.size() != want.size()) return INFINITY;
  double err = 0;
  for (std::size_t r = 0; r < got.size(); ++r) {
    if (got[r].size() != want[r].size()) return INFINITY;
    for (std::size_t i = 0; i < got[r].size(); ++i)
      err = std::max(err, std::abs(got[r][i] - want[r][i]) / std::max(1.0, std::abs(want[r][i])));
  }
  return err;
}

}  // namespace zaya::sim
