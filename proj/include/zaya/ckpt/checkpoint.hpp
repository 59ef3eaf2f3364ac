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

// Distributed checkpoint directory:
//
//   shard_<rank>.bin   optimizer shard per rank (see format.hpp)
//   weights.bf16       consolidated weights, bf16, written by rank 0
//   manifest.json      layout, parameter table, sizes, CRC-64 digests
//   COMPLETE           written last; a directory without it is partial
//
// Every rank writes its own shard, ranks then meet at a barrier that carries
// their digests to rank 0, and rank 0 writes weights, manifest and marker.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "zaya/ckpt/format.hpp"
#include "zaya/ckpt/sizes.hpp"
#include "zaya/simfabric/collectives.hpp"
#include "zaya/simfabric/fabric.hpp"
#include "zaya/zero1/distributed_muon.hpp"
#include "zaya/zero1/shard.hpp"

namespace zaya::ckpt {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kWeights = "weights.bf16";
inline constexpr const char* kMarker = "COMPLETE";

inline std::string shard_name(int rank) {
  std::ostringstream s;
  s << "shard_" << std::setw(5) << std::setfill('0') << rank << ".bin";
  return s.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

/// Fault injection for save: stop as if the job died at that point.
enum class Crash { none, after_shards, before_marker };

struct SaveOptions {
  std::size_t hp_bytes = 4;
  json metadata = json::object();  // replicated: seeds, schedule, model config
  Crash crash = Crash::none;
  // Copy this weights file verbatim instead of encoding the masters.
  fs::path weights_from{};
};

struct LoadedCheckpoint {
  zero1::ShardLayout layout;
  std::vector<zero1::RankShard> shards;
  std::size_t hp_bytes = 4;
  json manifest;

  /// Working weights rebuilt from the master shards.
  std::vector<Matrix> weights() const {
    std::vector<double> flat;
    for (const auto& s : shards) flat.insert(flat.end(), s.master.begin(), s.master.end());
    return zero1::unflatten(layout, flat);
  }
};

inline Bytes encode_weights_bf16(const zero1::ShardLayout& L, const std::vector<double>& flat) {
  ByteWriter w;
  for (std::size_t i = 0; i < L.logical_total; ++i) w.put_uint(to_bf16_bits(static_cast<float>(flat[i])));
  return std::move(w.bytes());
}

inline json layout_to_json(const zero1::ShardLayout& L) {
  json params = json::array();
  for (const auto& p : L.params)
    params.push_back({{"id", p.id},
                      {"name", p.name},
                      {"rows", p.rows},
                      {"cols", p.cols},
                      {"offset", p.offset},
                      {"kind", muon::to_string(p.kind)}});
  return {{"dp_degree", L.dp_degree},
          {"alignment", L.alignment},
          {"logical_total", L.logical_total},
          {"padded_total", L.padded_total},
          {"params", params}};
}

inline std::vector<muon::ParamSpec> specs_from_json(const json& params) {
  std::vector<muon::ParamSpec> specs;
  for (const auto& p : params) {
    muon::ParamSpec s;
    s.name = p.at("name").get<std::string>();
    s.rows = p.at("rows").get<std::size_t>();
    s.cols = p.at("cols").get<std::size_t>();
    const auto kind = p.at("kind").get<std::string>();
    if (kind != "muon" && kind != "adamw") throw CheckpointError("unknown optimizer kind '" + kind + "'");
    s.matrix = kind == "muon";
    specs.push_back(std::move(s));
  }
  return specs;
}

inline zero1::ShardLayout layout_from_json(const json& j) {
  auto L = zero1::build_shards(specs_from_json(j.at("params")), j.at("dp_degree").get<int>(),
                               j.at("alignment").get<std::size_t>());
  if (L.padded_total != j.at("padded_total").get<std::size_t>() ||
      L.logical_total != j.at("logical_total").get<std::size_t>())
    throw CheckpointError("manifest totals disagree with the parameter table");
  for (std::size_t i = 0; i < L.params.size(); ++i)
    if (L.params[i].offset != j.at("params")[i].at("offset").get<std::size_t>())
      throw CheckpointError("manifest offsets disagree with the parameter table");
  return L;
}

inline void save_checkpoint(const fs::path& dir, const zero1::ShardLayout& L,
                            const std::vector<zero1::RankShard>& shards, const SaveOptions& opt = {}) {
  if (shards.size() != static_cast<std::size_t>(L.dp_degree)) throw ShapeError("save_checkpoint: one shard per rank");
  if (opt.hp_bytes != 4 && opt.hp_bytes != 8) throw ConfigError("save_checkpoint: hp_bytes must be 4 or 8");
  for (std::size_t r = 1; r < shards.size(); ++r)
    if (shards[r].adam_step != shards[0].adam_step) throw ShapeError("save_checkpoint: ranks disagree on step count");
  fs::create_directories(dir);
  fs::remove(dir / kMarker);

  std::vector<std::uint64_t> sizes(shards.size());
  std::vector<std::uint64_t> digests(shards.size());
  sim::Fabric fabric(L.dp_degree);
  fabric.run([&](sim::Comm& c) -> sim::Task<> {
    const int r = c.rank();
    const Bytes bytes = encode_shard(L, shards[r], opt.hp_bytes);
    write_file(dir / shard_name(r), bytes);
    const std::uint64_t d = crc64(bytes);
    // Barrier that also delivers (size, digest) to rank 0; 32-bit halves are
    // exact in a double payload.
    auto split = [](std::uint64_t v) { return std::pair<double, double>(double(v >> 32), double(v & 0xffffffffu)); };
    auto [d_hi, d_lo] = split(d);
    auto [s_hi, s_lo] = split(bytes.size());
    sim::Payload all = co_await sim::allgather(c, sim::whole_world(c), {d_hi, d_lo, s_hi, s_lo});
    sim::Payload masters = co_await sim::allgather(c, sim::whole_world(c), shards[r].master);
    if (r != 0) co_return;
    auto join = [](double hi, double lo) { return (std::uint64_t(hi) << 32) | std::uint64_t(lo); };
    for (int q = 0; q < c.world_size(); ++q) {
      digests[q] = join(all[4 * q], all[4 * q + 1]);
      sizes[q] = join(all[4 * q + 2], all[4 * q + 3]);
    }
    if (opt.crash == Crash::after_shards) co_return;

    const Bytes wbytes = opt.weights_from.empty() ? encode_weights_bf16(L, masters) : read_file(opt.weights_from);
    if (wbytes.size() != 2 * L.logical_total) throw CheckpointError("weights file has the wrong size");
    write_file(dir / kWeights, wbytes);

    json files = json::array();
    for (int q = 0; q < c.world_size(); ++q)
      files.push_back({{"rank", q},
                       {"name", shard_name(q)},
                       {"bytes", sizes[q]},
                       {"payload_bytes", sizes[q] - kShardHeaderBytes},
                       {"crc64", hex64(digests[q])}});
    json m = {{"format", "zaya-ckpt"},
              {"version", kVersion},
              {"hp_bytes", opt.hp_bytes},
              {"lp_bytes", 2},
              {"adam_step", shards[0].adam_step},
              {"layout", layout_to_json(L)},
              {"files", files},
              {"weights", {{"name", kWeights}, {"bytes", wbytes.size()}, {"crc64", hex64(crc64(wbytes))}}},
              {"metadata", opt.metadata}};
    const std::string text = m.dump(2);
    write_file(dir / kManifest, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    if (opt.crash == Crash::before_marker) co_return;
    const std::string done = "ok\n";
    write_file(dir / kMarker, std::span(reinterpret_cast<const std::uint8_t*>(done.data()), done.size()));
  });
}

inline json read_manifest(const fs::path& dir) {
  if (!fs::exists(dir / kMarker)) throw CheckpointError("checkpoint at " + dir.string() + " is incomplete (no " + kMarker + ")");
  const Bytes text = read_file(dir / kManifest);
  json m;
  try {
    m = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (m.value("format", "") != "zaya-ckpt" || m.value("version", 0u) != kVersion)
    throw CheckpointError("unsupported checkpoint format");
  return m;
}

inline Bytes read_verified(const fs::path& path, const json& entry) {
  Bytes b = read_file(path);
  if (b.size() != entry.at("bytes").get<std::uint64_t>())
    throw CheckpointError(path.filename().string() + ": size differs from the manifest");
  if (hex64(crc64(b)) != entry.at("crc64").get<std::string>())
    throw CheckpointError(path.filename().string() + ": digest mismatch");
  return b;
}

inline LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  LoadedCheckpoint out;
  out.manifest = read_manifest(dir);
  const json& m = out.manifest;
  out.hp_bytes = m.at("hp_bytes").get<std::size_t>();
  out.layout = layout_from_json(m.at("layout"));
  const auto& files = m.at("files");
  if (files.size() != static_cast<std::size_t>(out.layout.dp_degree))
    throw CheckpointError("manifest lists the wrong number of shard files");
  for (int r = 0; r < out.layout.dp_degree; ++r) {
    const Bytes b = read_verified(dir / files[r].at("name").get<std::string>(), files[r]);
    out.shards.push_back(decode_shard(b, out.layout, r, out.hp_bytes));
    out.shards.back().adam_step = m.at("adam_step").get<long>();
  }
  return out;
}

/// Consolidated bf16 weights as doubles.
inline std::vector<Matrix> load_weights(const fs::path& dir) {
  const json m = read_manifest(dir);
  const auto L = layout_from_json(m.at("layout"));
  const Bytes b = read_verified(dir / kWeights, m.at("weights"));
  ByteReader r(b);
  std::vector<double> flat(L.logical_total);
  for (auto& v : flat) v = from_bf16_bits(r.get_uint<std::uint16_t>());
  return zero1::unflatten(L, flat);
}

/// Unpad every state vector to the logical parameters, re-partition for
/// `new_dp`, and repad with zeros.
inline std::pair<zero1::ShardLayout, std::vector<zero1::RankShard>> reshard(const zero1::ShardLayout& L,
                                                                              const std::vector<zero1::RankShard>& shards,
                                                                              int new_dp, std::size_t alignment = 0) {
  std::vector<muon::ParamSpec> specs;
  for (const auto& p : L.params) {
    muon::ParamSpec s;
    s.name = p.name;
    s.rows = p.rows;
    s.cols = p.cols;
    s.matrix = p.kind == zero1::OptimizerKind::muon;
    specs.push_back(s);
  }
  auto NL = zero1::build_shards(specs, new_dp, alignment == 0 ? L.alignment : alignment);
  auto logical = [&](std::vector<double> zero1::RankShard::*field) {
    std::vector<double> flat;
    for (const auto& s : shards) flat.insert(flat.end(), (s.*field).begin(), (s.*field).end());
    flat.resize(L.logical_total);
    flat.resize(NL.padded_total, 0.0);
    return flat;
  };
  const auto master = logical(&zero1::RankShard::master), mom = logical(&zero1::RankShard::momentum),
             m1 = logical(&zero1::RankShard::m1), m2 = logical(&zero1::RankShard::m2);
  std::vector<zero1::RankShard> out(static_cast<std::size_t>(new_dp));
  for (int r = 0; r < new_dp; ++r) {
    auto& s = out[r];
    s.rank = r;
    std::tie(s.begin, s.end) = NL.range(r);
    s.master = zero1::shard_slice(NL, master, r);
    s.momentum = zero1::shard_slice(NL, mom, r);
    s.m1 = zero1::shard_slice(NL, m1, r);
    s.m2 = zero1::shard_slice(NL, m2, r);
    s.adam_step = shards.empty() ? 0 : shards[0].adam_step;
  }
  return {std::move(NL), std::move(out)};
}

/// Offline reshape of a complete checkpoint to a new data-parallel degree.
inline void reshape_checkpoint(const fs::path& src, const fs::path& dst, int new_dp) {
  if (fs::exists(dst) && fs::equivalent(src, dst)) throw ConfigError("reshape_checkpoint: destination equals source");
  const LoadedCheckpoint in = load_checkpoint(src);
  auto [NL, shards] = reshard(in.layout, in.shards, new_dp);
  SaveOptions opt;
  opt.hp_bytes = in.hp_bytes;
  opt.metadata = in.manifest.at("metadata");
  opt.weights_from = src / kWeights;
  save_checkpoint(dst, NL, shards, opt);
}

}  // namespace zaya::ckpt
