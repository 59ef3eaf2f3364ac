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

// Ring collectives over Comm point-to-point messages. Every member of `group`
// must call the same collective in the same order. Collective traffic uses
// negative tags so it never collides with user channels.

#include <algorithm>
#include <string>
#include <vector>

#include "zaya/numcore/matrix.hpp"
#include "zaya/simfabric/fabric.hpp"

namespace zaya::sim {

enum class CollectiveKind { allreduce, allgather, reducescatter, alltoall, broadcast };

inline const char* to_string(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::allreduce: return "allreduce";
    case CollectiveKind::allgather: return "allgather";
    case CollectiveKind::reducescatter: return "reducescatter";
    case CollectiveKind::alltoall: return "alltoall";
    case CollectiveKind::broadcast: return "broadcast";
  }
  return "?";
}

inline CollectiveKind parse_collective(const std::string& s) {
  for (auto k : {CollectiveKind::allreduce, CollectiveKind::allgather, CollectiveKind::reducescatter,
                 CollectiveKind::alltoall, CollectiveKind::broadcast})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown collective kind '" + s + "'");
}

namespace tags {
inline constexpr int allgather = -1;
inline constexpr int reducescatter = -2;
inline constexpr int alltoall = -3;
inline constexpr int broadcast = -4;
}  // namespace tags

using Group = std::vector<int>;

namespace detail {

inline std::size_t group_index(const Group& g, int rank) {
  if (g.empty()) throw ShapeError("collective over an empty group");
  auto it = std::find(g.begin(), g.end(), rank);
  if (it == g.end()) throw ShapeError("rank " + std::to_string(rank) + " is not a member of the group");
  return static_cast<std::size_t>(it - g.begin());
}

// Chunk i of a length-n vector split p ways: [i*n/p, (i+1)*n/p).
inline std::pair<std::size_t, std::size_t> chunk_bounds(std::size_t n, std::size_t p, std::size_t i) {
  return {i * n / p, (i + 1) * n / p};
}

inline void expect_len(const Payload& got, std::size_t want, const char* what) {
  if (got.size() != want)
    throw ShapeError(zaya::detail::concat(what, ": peer payload has ", got.size(), " elements, expected ", want));
}

}  // namespace detail

/// Concatenation of every member's `local` in group order. All members must
/// contribute the same length.
inline Task<Payload> allgather(Comm& comm, const Group& group, Payload local) {
  const std::size_t p = group.size(), me = detail::group_index(group, comm.rank());
  const std::size_t c = local.size();
  Payload out(p * c);
  std::copy(local.begin(), local.end(), out.begin() + me * c);
  const int right = group[(me + 1) % p], left = group[(me + p - 1) % p];
  for (std::size_t s = 0; s + 1 < p; ++s) {
    const std::size_t send_idx = (me + p - s) % p, recv_idx = (me + p - s - 1) % p;
    comm.send(right, tags::allgather, Payload(out.begin() + send_idx * c, out.begin() + (send_idx + 1) * c));
    Payload in = co_await comm.recv(left, tags::allgather);
    detail::expect_len(in, c, "allgather");
    std::copy(in.begin(), in.end(), out.begin() + recv_idx * c);
  }
  co_return out;
}

/// Ring reduce-scatter: member i ends with the elementwise sum of chunk i,
/// chunks as in chunk_bounds(len, p, i).
inline Task<Payload> reducescatter(Comm& comm, const Group& group, Payload data) {
  const std::size_t p = group.size(), me = detail::group_index(group, comm.rank());
  const std::size_t n = data.size();
  const int right = group[(me + 1) % p], left = group[(me + p - 1) % p];
  for (std::size_t s = 0; s + 1 < p; ++s) {
    const auto [sb, se] = detail::chunk_bounds(n, p, (me + 2 * p - s - 1) % p);
    comm.send(right, tags::reducescatter, Payload(data.begin() + sb, data.begin() + se));
    const auto [rb, re] = detail::chunk_bounds(n, p, (me + 2 * p - s - 2) % p);
    Payload in = co_await comm.recv(left, tags::reducescatter);
    detail::expect_len(in, re - rb, "reducescatter");
    for (std::size_t i = rb; i < re; ++i) data[i] += in[i - rb];
  }
  const auto [b, e] = detail::chunk_bounds(n, p, me);
  co_return Payload(data.begin() + b, data.begin() + e);
}

/// Reduce-scatter followed by an allgather of the reduced chunks.
inline Task<Payload> allreduce(Comm& comm, const Group& group, Payload data) {
  const std::size_t p = group.size(), me = detail::group_index(group, comm.rank());
  const std::size_t n = data.size();
  Payload mine = co_await reducescatter(comm, group, std::move(data));
  Payload out(n);
  {
    const auto [b, e] = detail::chunk_bounds(n, p, me);
    std::copy(mine.begin(), mine.end(), out.begin() + b);
  }
  const int right = group[(me + 1) % p], left = group[(me + p - 1) % p];
  for (std::size_t s = 0; s + 1 < p; ++s) {
    const auto [sb, se] = detail::chunk_bounds(n, p, (me + p - s) % p);
    comm.send(right, tags::allgather, Payload(out.begin() + sb, out.begin() + se));
    const auto [rb, re] = detail::chunk_bounds(n, p, (me + p - s - 1) % p);
    Payload in = co_await comm.recv(left, tags::allgather);
    detail::expect_len(in, re - rb, "allreduce");
    std::copy(in.begin(), in.end(), out.begin() + rb);
  }
  co_return out;
}

/// `data` holds p equal per-destination chunks; result chunk j is what
/// member j addressed to this member.
inline Task<Payload> alltoall(Comm& comm, const Group& group, Payload data) {
  const std::size_t p = group.size(), me = detail::group_index(group, comm.rank());
  if (data.size() % p != 0) throw ShapeError("alltoall: payload length must be divisible by the group size");
  const std::size_t c = data.size() / p;
  Payload out(data.size());
  std::copy(data.begin() + me * c, data.begin() + (me + 1) * c, out.begin() + me * c);
  for (std::size_t k = 1; k < p; ++k) {
    const std::size_t to = (me + k) % p;
    comm.send(group[to], tags::alltoall, Payload(data.begin() + to * c, data.begin() + (to + 1) * c));
  }
  for (std::size_t k = 1; k < p; ++k) {
    const std::size_t from = (me + p - k) % p;
    Payload in = co_await comm.recv(group[from], tags::alltoall);
    detail::expect_len(in, c, "alltoall");
    std::copy(in.begin(), in.end(), out.begin() + from * c);
  }
  co_return out;
}

/// Root's payload forwarded around the ring starting at `root_index`.
inline Task<Payload> broadcast(Comm& comm, const Group& group, std::size_t root_index, Payload data) {
  const std::size_t p = group.size(), me = detail::group_index(group, comm.rank());
  if (root_index >= p) throw ShapeError("broadcast: root index out of range");
  const std::size_t pos = (me + p - root_index) % p;
  const int right = group[(me + 1) % p], left = group[(me + p - 1) % p];
  if (pos != 0) data = co_await comm.recv(left, tags::broadcast);
  if (pos + 1 < p) comm.send(right, tags::broadcast, data);
  co_return data;
}

inline Group whole_world(const Comm& comm) {
  Group g(comm.world_size());
  for (int r = 0; r < comm.world_size(); ++r) g[r] = r;
  return g;
}

}  // namespace zaya::sim
