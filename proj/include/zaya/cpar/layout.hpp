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

// Load-balanced sequence sharding for context parallelism. The sequence is
// cut into 2*cp equal chunks and rank r holds chunks r and 2cp-1-r, so every
// rank gets one early (cheap) and one late (expensive) chunk under a causal
// mask.

#include <array>
#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya::cpar {

struct CPLayout {
  std::size_t seq_len = 0;
  int cp_degree = 1;
  std::size_t chunk_len = 0;
  std::vector<std::array<std::size_t, 2>> assignment;  // rank -> chunk ids, ascending

  std::size_t num_chunks() const noexcept { return 2 * static_cast<std::size_t>(cp_degree); }
  std::size_t local_len() const noexcept { return 2 * chunk_len; }

  std::pair<std::size_t, std::size_t> chunk_range(std::size_t c) const {
    if (c >= num_chunks()) throw ShapeError(zaya::detail::concat("chunk ", c, " out of range"));
    return {c * chunk_len, (c + 1) * chunk_len};
  }

  int owner(std::size_t c) const {
    if (c >= num_chunks()) throw ShapeError(zaya::detail::concat("chunk ", c, " out of range"));
    const std::size_t n = num_chunks();
    return static_cast<int>(c < n / 2 ? c : n - 1 - c);
  }

  /// Position of chunk c inside its owner's local buffer (0 or 1).
  std::size_t slot(std::size_t c) const { return c < num_chunks() / 2 ? 0 : 1; }

  std::vector<std::size_t> positions(int rank) const {
    std::vector<std::size_t> pos;
    for (std::size_t c : assignment.at(static_cast<std::size_t>(rank)))
      for (std::size_t t = c * chunk_len; t < (c + 1) * chunk_len; ++t) pos.push_back(t);
    return pos;
  }

  /// Causal attention work of a rank counted in chunk-pair units: sum over its
  /// chunks of (chunk index + 1).
  std::size_t causal_work(int rank) const {
    const auto& a = assignment.at(static_cast<std::size_t>(rank));
    return a[0] + 1 + a[1] + 1;
  }
};

inline CPLayout cp_layout(std::size_t seq_len, int cp_degree) {
  if (cp_degree < 1) throw ConfigError("cp_layout: cp_degree must be >= 1");
  const std::size_t n = 2 * static_cast<std::size_t>(cp_degree);
  if (seq_len == 0 || seq_len % n != 0)
    throw ConfigError(zaya::detail::concat("cp_layout: seq_len ", seq_len, " is not divisible by 2*cp = ", n));
  CPLayout L;
  L.seq_len = seq_len;
  L.cp_degree = cp_degree;
  L.chunk_len = seq_len / n;
  for (std::size_t r = 0; r < static_cast<std::size_t>(cp_degree); ++r) L.assignment.push_back({r, n - 1 - r});
  return L;
}

/// Split a full (seq x width) matrix into per-rank local buffers.
inline std::vector<Matrix> shard_sequence(const CPLayout& L, const Matrix& full) {
  if (full.rows() != L.seq_len) throw ShapeError("shard_sequence: row count differs from seq_len");
  std::vector<Matrix> out;
  for (int r = 0; r < L.cp_degree; ++r) {
    Matrix m(L.local_len(), full.cols());
    std::size_t row = 0;
    for (std::size_t t : L.positions(r)) {
      std::copy(full.row(t).begin(), full.row(t).end(), m.row(row).begin());
      ++row;
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline Matrix unshard_sequence(const CPLayout& L, const std::vector<Matrix>& local) {
  if (local.size() != static_cast<std::size_t>(L.cp_degree)) throw ShapeError("unshard_sequence: one buffer per rank");
  const std::size_t w = local.empty() ? 0 : local[0].cols();
  Matrix full(L.seq_len, w);
  for (int r = 0; r < L.cp_degree; ++r) {
    if (local[r].rows() != L.local_len() || local[r].cols() != w) throw ShapeError("unshard_sequence: bad local shape");
    std::size_t row = 0;
    for (std::size_t t : L.positions(r)) {
      std::copy(local[r].row(row).begin(), local[r].row(row).end(), full.row(t).begin());
      ++row;
    }
  }
  return full;
}

/// Rows of chunk `slot` (0 or 1) of a local buffer.
inline Matrix chunk_rows(const CPLayout& L, const Matrix& local, std::size_t slot) {
  Matrix m(L.chunk_len, local.cols());
  std::copy(local.flat().begin() + static_cast<long>(slot * L.chunk_len * local.cols()),
            local.flat().begin() + static_cast<long>((slot + 1) * L.chunk_len * local.cols()), m.flat().begin());
  return m;
}

inline void set_chunk_rows(const CPLayout& L, Matrix& local, std::size_t slot, const Matrix& rows) {
  std::copy(rows.flat().begin(), rows.flat().end(), local.flat().begin() + static_cast<long>(slot * L.chunk_len * local.cols()));
}

}  // namespace zaya::cpar
