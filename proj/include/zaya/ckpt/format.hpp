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

// Binary encoding of optimizer shard files.
//
//   "ZCKP" | u32 version=1 | u32 dp_degree | u32 rank | u64 payload_len | payload
//
// All integers and floats little-endian. The payload walks the parameter
// table in order and, for every parameter overlapping the rank's range, writes
// the overlapping slice of: master, momentum (Muon) or master, m1, m2 (AdamW).
// Padding is never written.

#include <bit>
#include <boost/crc.hpp>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zaya/ckpt/sizes.hpp"
#include "zaya/zero1/distributed_muon.hpp"
#include "zaya/zero1/shard.hpp"

namespace zaya::ckpt {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr char kMagic[4] = {'Z', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kShardHeaderBytes = 4 + 4 + 4 + 4 + 8;

/// CRC-64/XZ.
inline std::uint64_t crc64(std::span<const std::uint8_t> bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  template <class U>
  void put_uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_real(double v, std::size_t width) {
    if (width == 4) put_uint(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else if (width == 8) put_uint(std::bit_cast<std::uint64_t>(v));
    else throw ConfigError("high-precision width must be 4 or 8 bytes");
  }
  void put_raw(const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  Bytes& bytes() noexcept { return buf_; }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  template <class U>
  U get_uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  double get_real(std::size_t width) {
    if (width == 4) return std::bit_cast<float>(get_uint<std::uint32_t>());
    if (width == 8) return std::bit_cast<double>(get_uint<std::uint64_t>());
    throw ConfigError("high-precision width must be 4 or 8 bytes");
  }
  void get_raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, b_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const noexcept { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw CheckpointError("truncated checkpoint data");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot create " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to " + p.string());
}

namespace detail {

template <class F>
void for_each_local(const zero1::ShardLayout& L, int rank, F&& f) {
  const auto [b, e] = L.range(rank);
  for (const auto& p : L.params) {
    if (!L.owns(rank, p)) continue;
    f(p, std::max(p.offset, b) - b, std::min(p.end(), e) - b);
  }
}

}  // namespace detail

inline Bytes encode_shard(const zero1::ShardLayout& L, const zero1::RankShard& s, std::size_t hp_bytes) {
  ByteWriter w;
  w.put_raw(kMagic, 4);
  w.put_uint(kVersion);
  w.put_uint(static_cast<std::uint32_t>(L.dp_degree));
  w.put_uint(static_cast<std::uint32_t>(s.rank));
  const std::size_t payload = shard_payload_bytes(L.local_elems(s.rank, zero1::OptimizerKind::muon),
                                                  L.local_elems(s.rank, zero1::OptimizerKind::adamw), hp_bytes);
  w.put_uint(static_cast<std::uint64_t>(payload));
  auto put = [&](const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) w.put_real(v[i], hp_bytes);
  };
  detail::for_each_local(L, s.rank, [&](const zero1::ParamDesc& p, std::size_t lo, std::size_t hi) {
    put(s.master, lo, hi);
    if (p.kind == zero1::OptimizerKind::muon) {
      put(s.momentum, lo, hi);
    } else {
      put(s.m1, lo, hi);
      put(s.m2, lo, hi);
    }
  });
  if (w.bytes().size() != kShardHeaderBytes + payload) throw CheckpointError("internal: shard payload size mismatch");
  return std::move(w.bytes());
}

inline zero1::RankShard decode_shard(std::span<const std::uint8_t> bytes, const zero1::ShardLayout& L, int rank,
                                     std::size_t hp_bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.get_raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("shard file has a bad magic number");
  if (r.get_uint<std::uint32_t>() != kVersion) throw CheckpointError("unsupported shard version");
  if (r.get_uint<std::uint32_t>() != static_cast<std::uint32_t>(L.dp_degree))
    throw CheckpointError("shard dp_degree differs from the manifest");
  if (r.get_uint<std::uint32_t>() != static_cast<std::uint32_t>(rank)) throw CheckpointError("shard rank mismatch");
  const auto payload = r.get_uint<std::uint64_t>();
  if (payload != r.remaining()) throw CheckpointError("shard payload length does not match the file");

  zero1::RankShard s;
  s.rank = rank;
  std::tie(s.begin, s.end) = L.range(rank);
  const std::size_t n = s.end - s.begin;
  s.master.assign(n, 0.0);
  s.momentum.assign(n, 0.0);
  s.m1.assign(n, 0.0);
  s.m2.assign(n, 0.0);
  auto get = [&](std::vector<double>& v, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) v[i] = r.get_real(hp_bytes);
  };
  detail::for_each_local(L, rank, [&](const zero1::ParamDesc& p, std::size_t lo, std::size_t hi) {
    get(s.master, lo, hi);
    if (p.kind == zero1::OptimizerKind::muon) {
      get(s.momentum, lo, hi);
    } else {
      get(s.m1, lo, hi);
      get(s.m2, lo, hi);
    }
  });
  if (r.remaining() != 0) throw CheckpointError("trailing bytes in shard payload");
  return s;
}

}  // namespace zaya::ckpt
