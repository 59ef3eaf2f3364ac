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

// ZeRO-1 sharding: all parameters are flattened in declaration order,
// concatenated, padded with zeros, and cut into dp equal contiguous ranges.
// A parameter is split when its flat interval crosses a range boundary.

#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zaya/muon/optimizer.hpp"
#include "zaya/numcore/matrix.hpp"

namespace zaya::zero1 {

using muon::OptimizerKind;
using muon::ParamSpec;

struct ParamDesc {
  std::size_t id = 0;
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;  // into the flat vector
  OptimizerKind kind = OptimizerKind::muon;
  std::vector<int> owners;  // ranks whose range intersects the parameter

  std::size_t numel() const noexcept { return rows * cols; }
  std::size_t end() const noexcept { return offset + numel(); }
  bool split() const noexcept { return owners.size() > 1; }
};

struct ShardLayout {
  std::vector<ParamDesc> params;
  int dp_degree = 1;
  std::size_t alignment = 1;
  std::size_t logical_total = 0;
  std::size_t padded_total = 0;

  std::size_t shard_size() const noexcept { return padded_total / static_cast<std::size_t>(dp_degree); }

  std::pair<std::size_t, std::size_t> range(int rank) const {
    if (rank < 0 || rank >= dp_degree) throw ShapeError(detail::concat("rank ", rank, " outside dp degree ", dp_degree));
    const std::size_t s = shard_size();
    return {static_cast<std::size_t>(rank) * s, static_cast<std::size_t>(rank + 1) * s};
  }

  const ParamDesc& param(std::size_t id) const {
    if (id >= params.size()) throw ShapeError(detail::concat("no parameter with id ", id));
    return params[id];
  }

  bool owns(int rank, const ParamDesc& p) const {
    for (int r : p.owners)
      if (r == rank) return true;
    return false;
  }

  // Logical elements of each optimizer kind inside a rank's range.
  std::size_t local_elems(int rank, OptimizerKind kind) const {
    const auto [b, e] = range(rank);
    std::size_t n = 0;
    for (const auto& p : params)
      if (p.kind == kind && p.offset < e && p.end() > b) n += std::min(p.end(), e) - std::max(p.offset, b);
    return n;
  }

  std::size_t max_span() const noexcept {
    std::size_t m = 0;
    for (const auto& p : params) m = std::max(m, p.owners.size());
    return m;
  }
};

inline ShardLayout build_shards(const std::vector<ParamSpec>& specs, int dp_degree, std::size_t alignment = 64) {
  if (dp_degree < 1) throw ConfigError("build_shards: dp_degree must be >= 1");
  if (alignment < 1) throw ConfigError("build_shards: alignment must be >= 1");
  ShardLayout L;
  L.dp_degree = dp_degree;
  L.alignment = alignment;
  std::size_t off = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    ParamDesc p;
    p.id = i;
    p.name = specs[i].name;
    p.rows = specs[i].rows;
    p.cols = specs[i].cols;
    p.offset = off;
    p.kind = specs[i].kind();
    off += p.numel();
    L.params.push_back(std::move(p));
  }
  L.logical_total = off;
  const std::size_t gran = static_cast<std::size_t>(dp_degree) * alignment;
  L.padded_total = (off + gran - 1) / gran * gran;
  const std::size_t s = L.shard_size();
  for (auto& p : L.params) {
    if (p.numel() == 0) continue;
    for (std::size_t r = p.offset / s; r * s < p.end(); ++r) p.owners.push_back(static_cast<int>(r));
  }
  return L;
}

/// Concatenate tensors in declaration order and zero-pad to padded_total.
inline std::vector<double> flatten(const ShardLayout& L, const std::vector<Matrix>& tensors) {
  if (tensors.size() != L.params.size()) throw ShapeError("flatten: one tensor per parameter required");
  std::vector<double> flat(L.padded_total, 0.0);
  for (const auto& p : L.params) {
    const Matrix& t = tensors[p.id];
    if (t.rows() != p.rows || t.cols() != p.cols)
      throw ShapeError(detail::concat("flatten: '", p.name, "' is ", t.rows(), "x", t.cols(), ", expected ", p.rows,
                                      "x", p.cols));
    std::copy(t.flat().begin(), t.flat().end(), flat.begin() + static_cast<long>(p.offset));
  }
  return flat;
}

inline std::vector<Matrix> unflatten(const ShardLayout& L, std::span<const double> flat) {
  if (flat.size() < L.logical_total) throw ShapeError("unflatten: flat vector shorter than the parameter total");
  std::vector<Matrix> out;
  out.reserve(L.params.size());
  for (const auto& p : L.params)
    out.emplace_back(p.rows, p.cols, std::vector<double>(flat.begin() + p.offset, flat.begin() + p.end()));
  return out;
}

inline std::vector<double> shard_slice(const ShardLayout& L, std::span<const double> flat, int rank) {
  if (flat.size() != L.padded_total) throw ShapeError("shard_slice: flat vector is not padded_total long");
  const auto [b, e] = L.range(rank);
  return {flat.begin() + b, flat.begin() + e};
}

}  // namespace zaya::zero1
