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

// Distributed pieces of CCA under context parallelism, each with its backward:
//
//   halo conv      every chunk needs the halo() tokens just before it; their
//                  owner sends them (or copies locally when it owns both).
//                  Backward sends the halo gradient the other way.
//   value shift    allgather the sequence, delay by one token, re-shard.
//                  Backward builds the shifted gradient in rank-segment
//                  order and reduce-scatters it.
//   ring attention k/v blocks travel right around the ring, folded in with an
//                  online softmax. Backward sends them left together with
//                  their dk/dv accumulators and returns those home at the end.

#include <array>
#include <vector>

#include "zaya/cpar/attention.hpp"
#include "zaya/cpar/layout.hpp"
#include "zaya/simfabric/collectives.hpp"
#include "zaya/simfabric/fabric.hpp"
#include "zaya/zayanet/cca_conv.hpp"

namespace zaya::cpar {

using sim::Comm;
using sim::Payload;
using sim::Task;

namespace tags {
inline constexpr int halo_fwd = 1000;  // + receiving chunk id
inline constexpr int halo_bwd = 2000;  // + receiving chunk id
inline constexpr int ring_fwd = 3000;
inline constexpr int ring_bwd = 3001;
inline constexpr int ring_home = 3002;
}  // namespace tags

struct CpStats {
  std::size_t halo_messages = 0;
  std::size_t halo_local_copies = 0;
  std::size_t ring_steps = 0;
};

namespace detail {

inline Payload pack(std::initializer_list<const Matrix*> ms) {
  Payload p;
  for (const Matrix* m : ms) p.insert(p.end(), m->flat().begin(), m->flat().end());
  return p;
}

inline void unpack(const Payload& p, std::initializer_list<Matrix*> ms) {
  std::size_t off = 0;
  for (Matrix* m : ms) {
    if (off + m->size() > p.size()) throw ShapeError("context parallel: short payload");
    std::copy(p.begin() + off, p.begin() + off + m->size(), m->flat().begin());
    off += m->size();
  }
  if (off != p.size()) throw ShapeError("context parallel: payload length mismatch");
}

inline void check_local(const CPLayout& L, const Comm& c, const Matrix& x, const char* what) {
  if (c.world_size() != L.cp_degree) throw ConfigError(zaya::detail::concat(what, ": world size differs from cp degree"));
  if (x.rows() != L.local_len()) throw ShapeError(zaya::detail::concat(what, ": local buffer must hold 2 chunks"));
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Halo convolution
//
// The halo of chunk c is the token range [start(c) - H, start(c)) clipped at
// 0; zeros fill the part before the sequence start. When chunks are at least
// H long the halo comes from chunk c-1 alone; shorter chunks pull it from
// several predecessors.

struct HaloConvCtx {
  std::array<Matrix, 2> ext;  // extended input per local chunk
};

namespace detail {

// Part of chunk `src` that lies in the halo of chunk `dst`, as chunk-local
// row offsets [lo, hi); empty when they do not touch.
inline std::pair<std::size_t, std::size_t> halo_part(const CPLayout& L, std::size_t H, std::size_t dst,
                                                     std::size_t src) {
  const std::size_t start = dst * L.chunk_len;
  const std::size_t need_lo = start >= H ? start - H : 0;
  const auto [b, e] = L.chunk_range(src);
  const std::size_t lo = std::max(b, need_lo), hi = std::min(e, start);
  if (src >= dst || lo >= hi) return {0, 0};
  return {lo - b, hi - b};
}

inline Matrix rows(const Matrix& m, std::size_t lo, std::size_t hi) {
  Matrix out(hi - lo, m.cols());
  std::copy(m.flat().begin() + static_cast<long>(lo * m.cols()), m.flat().begin() + static_cast<long>(hi * m.cols()),
            out.flat().begin());
  return out;
}

inline Payload to_payload(const Matrix& m) { return Payload(m.flat().begin(), m.flat().end()); }

}  // namespace detail

inline Task<Matrix> halo_conv_forward(Comm& comm, const CPLayout& L, const net::CcaConvParams& p, const Matrix& x,
                                      HaloConvCtx* ctx = nullptr, CpStats* st = nullptr) {
  detail::check_local(L, comm, x, "halo_conv_forward");
  p.validate();
  if (x.cols() != p.channels) throw ShapeError("halo_conv_forward: width differs from conv channels");
  const std::size_t H = p.halo(), n = L.num_chunks(), w = p.channels;
  const int me = comm.rank();
  const auto& mine = L.assignment[me];
  std::array<Matrix, 2> chunks{chunk_rows(L, x, 0), chunk_rows(L, x, 1)};

  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t dst = mine[s] + 1; dst < n; ++dst) {
      const auto [lo, hi] = detail::halo_part(L, H, dst, mine[s]);
      if (lo == hi || L.owner(dst) == me) continue;
      comm.send(L.owner(dst), tags::halo_fwd + static_cast<int>(dst), detail::to_payload(detail::rows(chunks[s], lo, hi)));
    }

  Matrix y(x.rows(), w);
  HaloConvCtx local_ctx;
  for (std::size_t s = 0; s < 2; ++s) {
    const std::size_t c = mine[s];
    Matrix ext(H + L.chunk_len, w);
    for (std::size_t src = 0; src < c; ++src) {
      const auto [lo, hi] = detail::halo_part(L, H, c, src);
      if (lo == hi) continue;
      Matrix part(hi - lo, w);
      if (L.owner(src) == me) {
        part = detail::rows(chunks[L.slot(src)], lo, hi);
        if (st) ++st->halo_local_copies;
      } else {
        detail::unpack(co_await comm.recv(L.owner(src), tags::halo_fwd + static_cast<int>(c)), {&part});
        if (st) ++st->halo_messages;
      }
      // Row of token (src_begin + lo) inside ext: H - (start(c) - token).
      const std::size_t token = src * L.chunk_len + lo;
      const std::size_t at = H - (c * L.chunk_len - token);
      std::copy(part.flat().begin(), part.flat().end(), ext.flat().begin() + static_cast<long>(at * w));
    }
    std::copy(chunks[s].flat().begin(), chunks[s].flat().end(), ext.flat().begin() + static_cast<long>(H * w));
    set_chunk_rows(L, y, s, net::cca_conv_forward(p, ext));
    local_ctx.ext[s] = std::move(ext);
  }
  if (ctx) *ctx = std::move(local_ctx);
  co_return y;
}

struct ConvBackward {
  Matrix dx;
  Matrix dw0;  // this rank's partial sums; allreduce for the full gradient
  Matrix dw1;
};

inline Task<ConvBackward> halo_conv_backward(Comm& comm, const CPLayout& L, const net::CcaConvParams& p,
                                             const HaloConvCtx& ctx, const Matrix& dy) {
  detail::check_local(L, comm, dy, "halo_conv_backward");
  const std::size_t H = p.halo(), n = L.num_chunks(), w = p.channels;
  const int me = comm.rank();
  const auto& mine = L.assignment[me];
  ConvBackward out{Matrix(dy.rows(), w), Matrix(w, p.k0), Matrix(w, p.per_group() * p.k1)};
  std::array<Matrix, 2> dx, dext;
  for (std::size_t s = 0; s < 2; ++s) {
    auto g = net::cca_conv_backward(p, ctx.ext[s], chunk_rows(L, dy, s));
    out.dw0 += g.dw0;
    out.dw1 += g.dw1;
    dx[s] = detail::rows(g.dx_ext, H, H + L.chunk_len);
    dext[s] = std::move(g.dx_ext);
  }
  auto halo_rows = [&](std::size_t s, std::size_t src, std::size_t lo, std::size_t hi) {
    const std::size_t c = mine[s];
    const std::size_t at = H - (c * L.chunk_len - (src * L.chunk_len + lo));
    return detail::rows(dext[s], at, at + (hi - lo));
  };
  auto add_rows = [&](Matrix& m, std::size_t lo, const Matrix& g) {
    for (std::size_t i = 0; i < g.size(); ++i) m.flat()[lo * w + i] += g.flat()[i];
  };
  // Sends and receives swap roles relative to the forward pass.
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t src = 0; src < mine[s]; ++src) {
      const auto [lo, hi] = detail::halo_part(L, H, mine[s], src);
      if (lo == hi || L.owner(src) == me) continue;
      comm.send(L.owner(src), tags::halo_bwd + static_cast<int>(mine[s]), detail::to_payload(halo_rows(s, src, lo, hi)));
    }
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t src = 0; src < mine[s]; ++src) {
      const auto [lo, hi] = detail::halo_part(L, H, mine[s], src);
      if (lo != hi && L.owner(src) == me) add_rows(dx[L.slot(src)], lo, halo_rows(s, src, lo, hi));
    }
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t dst = mine[s] + 1; dst < n; ++dst) {
      const auto [lo, hi] = detail::halo_part(L, H, dst, mine[s]);
      if (lo == hi || L.owner(dst) == me) continue;
      Matrix g(hi - lo, w);
      detail::unpack(co_await comm.recv(L.owner(dst), tags::halo_bwd + static_cast<int>(dst)), {&g});
      add_rows(dx[s], lo, g);
    }
  set_chunk_rows(L, out.dx, 0, dx[0]);
  set_chunk_rows(L, out.dx, 1, dx[1]);
  co_return out;
}

// ----------------------------------------------------------------------------
// Value shift (one-token delay of the v2 stream)

inline Task<Matrix> value_shift_forward(Comm& comm, const CPLayout& L, const Matrix& v) {
  detail::check_local(L, comm, v, "value_shift_forward");
  Payload all = co_await sim::allgather(comm, sim::whole_world(comm), Payload(v.flat().begin(), v.flat().end()));
  std::vector<Matrix> parts;
  const std::size_t seg = v.size();
  for (int r = 0; r < L.cp_degree; ++r)
    parts.emplace_back(v.rows(), v.cols(), std::vector<double>(all.begin() + r * seg, all.begin() + (r + 1) * seg));
  const Matrix shifted = net::shift_right(unshard_sequence(L, parts));
  co_return shard_sequence(L, shifted)[comm.rank()];
}

inline Task<Matrix> value_shift_backward(Comm& comm, const CPLayout& L, const Matrix& dy) {
  detail::check_local(L, comm, dy, "value_shift_backward");
  const std::size_t w = dy.cols(), seg = dy.size();
  // Global token t -> row in the rank-segment ordered buffer.
  auto row_of = [&](std::size_t t) {
    const std::size_t c = t / L.chunk_len;
    return static_cast<std::size_t>(L.owner(c)) * L.local_len() + L.slot(c) * L.chunk_len + t % L.chunk_len;
  };
  Payload buf(seg * static_cast<std::size_t>(L.cp_degree), 0.0);
  const auto pos = L.positions(comm.rank());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (pos[i] == 0) continue;
    const std::size_t dst = row_of(pos[i] - 1);
    for (std::size_t j = 0; j < w; ++j) buf[dst * w + j] = dy(i, j);
  }
  Payload mine = co_await sim::reducescatter(comm, sim::whole_world(comm), std::move(buf));
  co_return Matrix(dy.rows(), w, std::move(mine));
}

// ----------------------------------------------------------------------------
// Ring attention

inline Task<AttnOut> ring_attention_forward(Comm& comm, const CPLayout& L, const Matrix& q, const Matrix& k,
                                            const Matrix& v, std::size_t heads, CpStats* st = nullptr) {
  detail::check_local(L, comm, q, "ring_attention_forward");
  if (!k.same_shape(q) || !v.same_shape(q)) throw ShapeError("ring_attention: q, k, v must share a shape");
  const int me = comm.rank(), cp = L.cp_degree;
  const auto pos = L.positions(me);
  OnlineSoftmax acc(q.rows(), heads, q.cols());
  Matrix ck = k, cv = v;
  std::vector<std::size_t> cpos = pos;
  Matrix pos_m(cpos.size(), 1);
  for (int s = 0; s < cp; ++s) {
    fold(acc, q, pos, ck, cv, cpos);
    if (s + 1 == cp) break;
    for (std::size_t i = 0; i < cpos.size(); ++i) pos_m(i, 0) = static_cast<double>(cpos[i]);
    comm.send((me + 1) % cp, tags::ring_fwd, detail::pack({&ck, &cv, &pos_m}));
    detail::unpack(co_await comm.recv((me + cp - 1) % cp, tags::ring_fwd), {&ck, &cv, &pos_m});
    for (std::size_t i = 0; i < cpos.size(); ++i) cpos[i] = static_cast<std::size_t>(pos_m(i, 0));
    if (st) ++st->ring_steps;
  }
  co_return finalize(acc);
}

struct AttnGrads {
  Matrix dq, dk, dv;
};

inline Task<AttnGrads> ring_attention_backward(Comm& comm, const CPLayout& L, const Matrix& q, const Matrix& k,
                                               const Matrix& v, const AttnOut& fwd, const Matrix& d_o,
                                               std::size_t heads) {
  detail::check_local(L, comm, q, "ring_attention_backward");
  const int me = comm.rank(), cp = L.cp_degree;
  const auto pos = L.positions(me);
  const Matrix rowdot = attention_rowdot(fwd.o, d_o, heads);
  AttnGrads g{Matrix(q.rows(), q.cols()), Matrix(k.rows(), k.cols()), Matrix(v.rows(), v.cols())};
  Matrix ck = k, cv = v, cdk(k.rows(), k.cols()), cdv(v.rows(), v.cols()), pos_m(pos.size(), 1);
  std::vector<std::size_t> cpos = pos;
  const int left = (me + cp - 1) % cp, right = (me + 1) % cp;
  for (int s = 0; s < cp; ++s) {
    attention_block_backward(q, pos, ck, cv, cpos, d_o, fwd.lse, rowdot, heads, g.dq, cdk, cdv);
    if (s + 1 == cp) break;
    for (std::size_t i = 0; i < cpos.size(); ++i) pos_m(i, 0) = static_cast<double>(cpos[i]);
    comm.send(left, tags::ring_bwd, detail::pack({&ck, &cv, &pos_m, &cdk, &cdv}));
    detail::unpack(co_await comm.recv(right, tags::ring_bwd), {&ck, &cv, &pos_m, &cdk, &cdv});
    for (std::size_t i = 0; i < cpos.size(); ++i) cpos[i] = static_cast<std::size_t>(pos_m(i, 0));
  }
  if (cp == 1) {
    g.dk = std::move(cdk);
    g.dv = std::move(cdv);
    co_return g;
  }
  // The block held now belongs to the left neighbour; ours sits to the right.
  comm.send(left, tags::ring_home, detail::pack({&cdk, &cdv}));
  detail::unpack(co_await comm.recv(right, tags::ring_home), {&g.dk, &g.dv});
  co_return g;
}

}  // namespace zaya::cpar
