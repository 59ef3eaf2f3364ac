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

// Distributed Muon under ZeRO-1. Each rank holds master weights and optimizer
// state for its flat range only; gradients are replicated (already averaged).
//
// Per step:
//   momentum pass and AdamW on the local slice (elementwise, no comms)
//   rebuild every owned Muon parameter's NS input as a whole matrix
//     sendrecv:  whole params reshape in place; a split param swaps the
//                missing portion with its single neighbour owner
//     allgather: gather the whole padded NS-input vector on every rank
//   NS on the full matrix, update only the local master slice
//   allgather master shards into working weights

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "zaya/muon/adamw.hpp"
#include "zaya/muon/muon.hpp"
#include "zaya/muon/optimizer.hpp"
#include "zaya/simfabric/collectives.hpp"
#include "zaya/zero1/shard.hpp"

namespace zaya::zero1 {

using sim::Comm;
using sim::Payload;
using sim::Task;

enum class Strategy { sendrecv, allgather };

inline const char* to_string(Strategy s) { return s == Strategy::sendrecv ? "sendrecv" : "allgather"; }

inline Strategy parse_strategy(const std::string& s) {
  if (s == "sendrecv") return Strategy::sendrecv;
  if (s == "allgather") return Strategy::allgather;
  throw ConfigError("unknown strategy '" + s + "' (expected sendrecv or allgather)");
}

struct ZeroConfig {
  muon::HybridConfig opt{};
  Strategy strategy = Strategy::sendrecv;
  // Parameters spanning more than two ranks are gathered among their owners
  // instead of rejected.
  bool allgather_fallback = false;
};

/// One rank's persistent ZeRO-1 state, covering [begin, end) of the padded
/// flat vector. Muon positions use `momentum`; AdamW positions use m1/m2.
struct RankShard {
  int rank = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<double> master;
  std::vector<double> momentum;
  std::vector<double> m1;
  std::vector<double> m2;
  long adam_step = 0;
};

inline std::vector<RankShard> init_shards(const ShardLayout& L, const std::vector<Matrix>& weights) {
  const std::vector<double> flat = flatten(L, weights);
  std::vector<RankShard> out(static_cast<std::size_t>(L.dp_degree));
  for (int r = 0; r < L.dp_degree; ++r) {
    auto& s = out[r];
    s.rank = r;
    std::tie(s.begin, s.end) = L.range(r);
    s.master = shard_slice(L, flat, r);
    s.momentum.assign(s.master.size(), 0.0);
    s.m1.assign(s.master.size(), 0.0);
    s.m2.assign(s.master.size(), 0.0);
  }
  return out;
}

/// Per-rank accounting filled in during a step.
struct StepStats {
  std::size_t messages_sent = 0;
  std::size_t peak_transient_elems = 0;  // largest reconstruction buffer held at once
};

namespace detail {

struct Overlap {
  std::size_t lo = 0, hi = 0;  // absolute flat interval
  std::size_t size() const noexcept { return hi - lo; }
};

inline Overlap overlap(const ParamDesc& p, std::size_t b, std::size_t e) {
  return {std::max(p.offset, b), std::min(p.end(), e)};
}

inline void check_sendrecv_span(const ParamDesc& p, bool fallback) {
  if (p.owners.size() > 2 && !fallback)
    throw ConfigError(zaya::detail::concat("parameter '", p.name, "' spans ", p.owners.size(),
                                           " ranks; sendrecv reconstruction supports at most 2 (enable the allgather "
                                           "fallback or use the allgather strategy)"));
}

inline void note_transient(StepStats* st, std::size_t elems) {
  if (st) st->peak_transient_elems = std::max(st->peak_transient_elems, elems);
}

}  // namespace detail

/// Full 2-D parameter assembled from each owner's `local` range buffer
/// (the rank's whole shard, indexed from layout.range(rank).first).
inline Task<Matrix> reconstruct_param(Comm& comm, const ShardLayout& L, std::size_t param_id,
                                      std::span<const double> local, bool allgather_fallback = false,
                                      StepStats* stats = nullptr) {
  const ParamDesc& p = L.param(param_id);
  const int me = comm.rank();
  if (!L.owns(me, p)) throw ShapeError(zaya::detail::concat("rank ", me, " owns no part of '", p.name, "'"));
  detail::check_sendrecv_span(p, allgather_fallback);
  const auto [b, e] = L.range(me);
  if (local.size() != e - b) throw ShapeError("reconstruct_param: local buffer is not the rank's shard");
  const auto ov = detail::overlap(p, b, e);
  std::span<const double> mine = local.subspan(ov.lo - b, ov.size());

  std::vector<double> full(p.numel());
  if (!p.split()) {
    std::copy(mine.begin(), mine.end(), full.begin());
    co_return Matrix(p.rows, p.cols, std::move(full));
  }

  const int tag = static_cast<int>(p.id);
  if (p.owners.size() == 2) {
    const int peer = p.owners[0] == me ? p.owners[1] : p.owners[0];
    Payload got;
    if (me < peer) {
      comm.send(peer, tag, Payload(mine.begin(), mine.end()));
      got = co_await comm.recv(peer, tag);
    } else {
      got = co_await comm.recv(peer, tag);
      comm.send(peer, tag, Payload(mine.begin(), mine.end()));
    }
    if (stats) ++stats->messages_sent;
    if (got.size() != p.numel() - ov.size())
      throw ShapeError(zaya::detail::concat("reconstruct_param: received ", got.size(), " elements of '", p.name,
                                            "', expected ", p.numel() - ov.size()));
    detail::note_transient(stats, got.size());
    // The lower rank holds the head of the parameter.
    if (me < peer) {
      std::copy(mine.begin(), mine.end(), full.begin());
      std::copy(got.begin(), got.end(), full.begin() + static_cast<long>(mine.size()));
    } else {
      std::copy(got.begin(), got.end(), full.begin());
      std::copy(mine.begin(), mine.end(), full.begin() + static_cast<long>(got.size()));
    }
    co_return Matrix(p.rows, p.cols, std::move(full));
  }

  // Fallback: every owner sends its portion to every other owner.
  for (int r : p.owners)
    if (r != me) {
      comm.send(r, tag, Payload(mine.begin(), mine.end()));
      if (stats) ++stats->messages_sent;
    }
  std::size_t received = 0;
  for (int r : p.owners) {
    const auto [rb, re] = L.range(r);
    const auto o = detail::overlap(p, rb, re);
    if (r == me) {
      std::copy(mine.begin(), mine.end(), full.begin() + static_cast<long>(o.lo - p.offset));
      continue;
    }
    Payload got = co_await comm.recv(r, tag);
    if (got.size() != o.size()) throw ShapeError("reconstruct_param: owner portion has the wrong length");
    std::copy(got.begin(), got.end(), full.begin() + static_cast<long>(o.lo - p.offset));
    received += got.size();
  }
  detail::note_transient(stats, received);
  co_return Matrix(p.rows, p.cols, std::move(full));
}

/// One optimizer step on this rank. Returns the updated working weights
/// (identical on every rank).
inline Task<std::vector<Matrix>> distributed_muon_step(Comm& comm, const ShardLayout& L, RankShard& s,
                                                       const std::vector<Matrix>& grads, const ZeroConfig& cfg,
                                                       StepStats* stats = nullptr) {
  cfg.opt.muon.validate();
  if (comm.world_size() != L.dp_degree) throw ConfigError("distributed_muon_step: world size differs from dp degree");
  if (grads.size() != L.params.size()) throw ShapeError("distributed_muon_step: one gradient per parameter required");
  const auto [b, e] = L.range(comm.rank());
  if (s.begin != b || s.end != e || s.master.size() != e - b) throw ShapeError("distributed_muon_step: shard/layout mismatch");
  if (cfg.strategy == Strategy::sendrecv)
    for (const auto& p : L.params)
      if (L.owns(comm.rank(), p) && p.kind == OptimizerKind::muon) detail::check_sendrecv_span(p, cfg.allgather_fallback);

  const auto& mc = cfg.opt.muon;
  std::vector<double> ns_in(e - b, 0.0);
  ++s.adam_step;
  for (const auto& p : L.params) {
    const Matrix& g = grads[p.id];
    if (g.rows() != p.rows || g.cols() != p.cols)
      throw ShapeError(zaya::detail::concat("gradient for '", p.name, "' has the wrong shape"));
    if (!L.owns(comm.rank(), p)) continue;
    const auto ov = detail::overlap(p, b, e);
    const std::size_t at = ov.lo - b, n = ov.size();
    auto gs = g.flat().subspan(ov.lo - p.offset, n);
    if (p.kind == OptimizerKind::muon) {
      muon::momentum_pass(std::span(s.momentum).subspan(at, n), gs, std::span(ns_in).subspan(at, n), mc);
    } else {
      muon::adamw_update(std::span(s.master).subspan(at, n), gs, std::span(s.m1).subspan(at, n),
                         std::span(s.m2).subspan(at, n), s.adam_step, cfg.opt.adamw, mc.eta, cfg.opt.adamw_delta);
    }
  }

  const sim::Group world = sim::whole_world(comm);
  Payload gathered;
  if (cfg.strategy == Strategy::allgather) {
    gathered = co_await sim::allgather(comm, world, ns_in);
    detail::note_transient(stats, gathered.size());
  }

  for (const auto& p : L.params) {
    if (p.kind != OptimizerKind::muon || !L.owns(comm.rank(), p)) continue;
    Matrix full;
    if (cfg.strategy == Strategy::allgather)
      full = Matrix(p.rows, p.cols, std::vector<double>(gathered.begin() + p.offset, gathered.begin() + p.end()));
    else
      full = co_await reconstruct_param(comm, L, p.id, ns_in, cfg.allgather_fallback, stats);
    const Matrix upd = muon::newton_schulz(full, mc);
    const auto ov = detail::overlap(p, b, e);
    muon::weight_update(std::span(s.master).subspan(ov.lo - b, ov.size()), upd.flat().subspan(ov.lo - p.offset, ov.size()),
                        mc.eta, mc.delta, muon::update_scale(mc, p.rows, p.cols));
  }

  Payload all = co_await sim::allgather(comm, world, s.master);
  co_return unflatten(L, all);
}

// ----------------------------------------------------------------------------
// Memory accounting

struct RankMemory {
  std::size_t persistent_bytes = 0;  // master + optimizer state for the shard
  std::size_t transient_bytes = 0;   // reconstruction buffers at peak
  std::size_t peak_bytes() const noexcept { return persistent_bytes + transient_bytes; }
};

struct MemoryReport {
  Strategy strategy = Strategy::sendrecv;
  std::vector<RankMemory> ranks;

  std::size_t max_transient() const noexcept {
    std::size_t m = 0;
    for (const auto& r : ranks) m = std::max(m, r.transient_bytes);
    return m;
  }
  std::size_t max_peak() const noexcept {
    std::size_t m = 0;
    for (const auto& r : ranks) m = std::max(m, r.peak_bytes());
    return m;
  }
  /// Transient share of peak optimizer memory on the worst rank.
  double transient_share() const noexcept {
    double best = 0;
    for (const auto& r : ranks)
      if (r.peak_bytes() > 0) best = std::max(best, static_cast<double>(r.transient_bytes) / r.peak_bytes());
    return best;
  }
};

/// `state_bytes` per high-precision value, `buffer_bytes` per element of the
/// reconstruction buffer.
inline MemoryReport peak_memory_estimate(const ShardLayout& L, Strategy strategy, std::size_t state_bytes = 4,
                                         std::size_t buffer_bytes = 4, bool allgather_fallback = false) {
  MemoryReport rep;
  rep.strategy = strategy;
  for (int r = 0; r < L.dp_degree; ++r) {
    RankMemory m;
    m.persistent_bytes =
        (2 * L.local_elems(r, OptimizerKind::muon) + 3 * L.local_elems(r, OptimizerKind::adamw)) * state_bytes;
    if (strategy == Strategy::allgather) {
      m.transient_bytes = L.padded_total * buffer_bytes;
    } else {
      const auto [b, e] = L.range(r);
      std::size_t worst = 0;
      for (const auto& p : L.params) {
        if (p.kind != OptimizerKind::muon || !p.split() || !L.owns(r, p)) continue;
        detail::check_sendrecv_span(p, allgather_fallback);
        worst = std::max(worst, p.numel() - detail::overlap(p, b, e).size());
      }
      m.transient_bytes = worst * buffer_bytes;
    }
    rep.ranks.push_back(m);
  }
  return rep;
}

}  // namespace zaya::zero1
