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

// Every CLI subcommand as a function returning report tables, so the same
// code paths are reachable from tests without spawning the binary.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "zaya/ckpt/checkpoint.hpp"
#include "zaya/ckpt/sizes.hpp"
#include "zaya/cli/table.hpp"
#include "zaya/cpar/context_parallel.hpp"
#include "zaya/perfplan/alpha_beta.hpp"
#include "zaya/perfplan/bandwidth.hpp"
#include "zaya/perfplan/sizing.hpp"
#include "zaya/perfplan/storage.hpp"
#include "zaya/perfplan/stream.hpp"
#include "zaya/simfabric/cost_model.hpp"
#include "zaya/simfabric/reference.hpp"
#include "zaya/zero1/trainer.hpp"
#include "zaya/zayanet/config.hpp"

namespace zaya::cli {

namespace fs = std::filesystem;

// ---- plan ------------------------------------------------------------------

/// n = 0 lists every group size from 1 to 8.
inline Table plan_xgmi(int n, double link_bw, perf::IntraMode mode, double b_max) {
  Table t{{"n", "mode", "link_bw_Bps", "b_max_Bps", "bw_Bps", "bw_GBps"}, {}};
  const int lo = n ? n : 1, hi = n ? n : 8;
  for (int i = lo; i <= hi; ++i) {
    const double bw = perf::xgmi_bw(i, link_bw, mode, b_max);
    t.add({i, perf::to_string(mode), link_bw, b_max, bw, bw / 1e9});
  }
  return t;
}

inline Table plan_fusion(const perf::AlphaBeta& ab, double epsilon) {
  const double m = perf::fusion_buffer_size(ab.alpha, ab.beta, epsilon);
  Table t{{"alpha_s", "beta_Bps", "epsilon", "fusion_bytes", "fusion_MiB", "achieved_Bps", "alpha_clamped"}, {}};
  t.add({ab.alpha, ab.beta, epsilon, m, m / (1 << 20), perf::achieved_bw(ab.alpha, ab.beta, m), ab.alpha_clamped()});
  return t;
}

/// Samples file: one "bytes,seconds" pair per line; '#' lines and a
/// non-numeric header are skipped.
inline perf::CostSamples read_samples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read samples file " + path.string());
  auto num = [](const std::string& f, double& v) {
    std::size_t used = 0;
    try {
      v = std::stod(f, &used);
    } catch (const std::exception&) {
      return false;
    }
    return f.find_first_not_of(" \t\r", used) == std::string::npos;
  };
  perf::CostSamples out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("samples: expected 'bytes,seconds' but got '" + line + "'");
    double b = 0, t = 0;
    const bool ok = num(line.substr(0, comma), b) && num(line.substr(comma + 1), t);
    if (!ok && first) {  // header
      first = false;
      continue;
    }
    first = false;
    if (!ok) throw ConfigError("samples: non-numeric line '" + line + "'");
    out.push_back({b, t});
  }
  return out;
}

inline Table plan_storage(const perf::StoragePlan& p) {
  const auto r = perf::storage_plan(p);
  Table t{{"G", "s", "b_bytes", "page_bytes", "t_s", "iops_budget", "sigma", "m", "bytes_per_iter", "MiB_per_iter",
           "pages_per_iter", "iops_needed", "t_break_s", "sigma_est", "feasible"},
          {}};
  t.add({p.G, p.s, p.b, p.P, p.t, p.I_max, p.sigma, p.m, r.bytes_per_iter, r.bytes_per_iter / (1 << 20), r.pages_per_iter,
         r.iops_needed, r.t_break, r.sigma_est, r.feasible()});
  return t;
}

struct ParamCounts {
  double muon = 0, adamw = 0;
};

inline ParamCounts count_params(const std::vector<muon::ParamSpec>& specs) {
  ParamCounts c;
  for (const auto& s : specs) (s.kind() == muon::OptimizerKind::muon ? c.muon : c.adamw) += double(s.numel());
  return c;
}

inline Table plan_checkpoint(double p_muon, double p_adamw, double b_lp, double b_hp, int dp) {
  const auto s = ckpt::checkpoint_sizes(p_muon, p_adamw, b_lp, b_hp, dp);
  Table t{{"P_M", "P_A", "b_lp_bytes", "b_hp_bytes", "dp", "total_bytes", "rank0_bytes", "rank_other_bytes"}, {}};
  t.add({p_muon, p_adamw, b_lp, b_hp, dp, s.total, s.rank0(), dp > 1 ? json(s.per_rank[1]) : json(nullptr)});
  return t;
}

inline Table plan_sizing(const net::ModelConfig& m) {
  Table t{{"gemm", "M", "N", "K", "flops", "peak_ready"}, {}};
  for (const auto& g : perf::model_gemms(m)) {
    const auto f = perf::gemm_flops(double(g.M), double(g.N), double(g.K));
    t.add({g.name, g.M, g.N, g.K, f.flops, f.peak_ready});
  }
  return t;
}

inline Table plan_bands(const std::vector<double>& seqs, double E, double band) {
  Table t{{"s_tokens", "E", "band", "center_tokens", "low_tokens", "high_tokens"}, {}};
  for (double s : seqs) {
    const auto b = perf::moe_bands(s, E, band);
    t.add({s, E, band, b.center, b.low, b.high});
  }
  return t;
}

/// Optimizer memory per strategy on the worst rank, one row per (dp, strategy).
/// SendRecv falls back to AllGather for parameters spanning more than two ranks.
inline Table plan_optimizer_memory(const net::ModelConfig& m, const std::vector<int>& dps, std::size_t state_bytes,
                                   std::size_t buffer_bytes, std::size_t alignment = 64) {
  Table t{{"model", "dp", "strategy", "padded_elems", "persistent_bytes", "transient_bytes", "peak_bytes",
           "transient_share"},
          {}};
  const auto specs = net::param_specs(m);
  for (int dp : dps) {
    const auto L = zero1::build_shards(specs, dp, alignment);
    for (auto s : {zero1::Strategy::allgather, zero1::Strategy::sendrecv}) {
      const auto rep = zero1::peak_memory_estimate(L, s, state_bytes, buffer_bytes, true);
      // worst rank by transient share
      std::size_t w = 0;
      for (std::size_t r = 1; r < rep.ranks.size(); ++r) {
        const auto& a = rep.ranks[r];
        const auto& b = rep.ranks[w];
        if (double(a.transient_bytes) * double(b.peak_bytes()) > double(b.transient_bytes) * double(a.peak_bytes())) w = r;
      }
      const auto& k = rep.ranks[w];
      t.add({m.name, dp, zero1::to_string(s), L.padded_total, k.persistent_bytes, k.transient_bytes, k.peak_bytes(),
             rep.transient_share()});
    }
  }
  return t;
}

// ---- lint ------------------------------------------------------------------

struct LintResult {
  Table findings;
  std::size_t violations = 0;
  std::size_t advisories = 0;
  std::string summary() const {
    return std::to_string(violations) + " violations, " + std::to_string(advisories) + " advisories";
  }
};

inline LintResult lint_sizing(const net::ModelConfig& m, std::size_t t) {
  const auto rep = perf::sizing_lint(m, t);
  LintResult r{{{"rule", "severity", "detail"}, {}}, rep.violations(), rep.count(perf::Severity::advisory)};
  for (const auto& f : rep.findings) r.findings.add({f.rule, perf::to_string(f.severity), f.detail});
  return r;
}

// ---- sim -------------------------------------------------------------------

inline Table sim_collective(const sim::FabricTopology& topo, const std::vector<sim::CollectiveKind>& kinds,
                            const std::vector<int>& ranks, const std::vector<double>& bytes, std::uint64_t seed) {
  Table t{{"kind", "ranks", "bytes", "predicted_s", "algbw_Bps", "busbw_Bps", "measured_equivalence"}, {}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (auto kind : kinds)
    for (int n : ranks) {
      // Functional check on small random payloads: simulated ring vs central definition.
      std::vector<sim::Payload> in(n, sim::Payload(std::size_t(n) * 3));
      for (auto& p : in)
        for (auto& x : p) x = nd(rng);
      sim::Fabric f(n);
      const bool ok = sim::collective_error(sim::run_collective(f, kind, in), sim::reference_collective(kind, in)) <= 1e-12;
      for (double m : bytes) {
        const auto e = sim::predict_time(topo, kind, m, n);
        t.add({sim::to_string(kind), n, m, e.seconds, e.algbw, e.busbw, ok});
      }
    }
  return t;
}

inline Table sim_cp(int cp, std::size_t seq, std::uint64_t seed, std::size_t channels = 8, std::size_t heads = 2) {
  using cpar::CpStats;
  const auto L = cpar::cp_layout(seq, cp);
  std::mt19937_64 rng(seed);
  const auto p = net::CcaConvParams::random(channels, channels / 2, rng);
  const Matrix x = Matrix::gaussian(seq, channels, rng), dy = Matrix::gaussian(seq, channels, rng);
  const Matrix q = Matrix::gaussian(seq, channels, rng), k = Matrix::gaussian(seq, channels, rng),
               v = Matrix::gaussian(seq, channels, rng);

  // serial references
  const Matrix conv_y = net::cca_conv_serial(p, x);
  const auto conv_g = net::cca_conv_backward(p, net::extend({}, x, p.halo()), dy);
  Matrix conv_dx(seq, channels);
  std::copy(conv_g.dx_ext.flat().begin() + p.halo() * channels, conv_g.dx_ext.flat().end(), conv_dx.flat().begin());
  const Matrix shift_y = net::shift_right(x), shift_dx = net::shift_right_backward(dy);
  const auto attn = cpar::causal_attention(q, k, v, heads);
  Matrix dq(seq, channels), dk(seq, channels), dv(seq, channels);
  {
    std::vector<std::size_t> pos(seq);
    for (std::size_t i = 0; i < seq; ++i) pos[i] = i;
    cpar::attention_block_backward(q, pos, k, v, pos, dy, attn.lse, cpar::attention_rowdot(attn.o, dy, heads), heads, dq,
                                   dk, dv);
  }

  auto xs = cpar::shard_sequence(L, x), dys = cpar::shard_sequence(L, dy);
  auto qs = cpar::shard_sequence(L, q), ks = cpar::shard_sequence(L, k), vs = cpar::shard_sequence(L, v);
  std::vector<Matrix> cy(cp), cdx(cp), sy(cp), sdx(cp), ao(cp), adq(cp), adk(cp), adv(cp);
  Matrix dw0(p.w0.rows(), p.w0.cols()), dw1(p.w1.rows(), p.w1.cols());
  std::vector<CpStats> st(cp);
  struct Traffic {
    std::size_t messages = 0, elems = 0;
  };
  Traffic tr[3];
  sim::Fabric f(cp);
  auto measure = [&](int phase, auto body) {
    f.clear_transcript();
    f.run(body);
    for (const auto& e : f.transcript())
      if (e.kind == sim::EventKind::send) {
        ++tr[phase].messages;
        tr[phase].elems += e.elems;
      }
  };
  measure(0, [&](sim::Comm& c) -> sim::Task<> {
    cpar::HaloConvCtx ctx;
    cy[c.rank()] = co_await cpar::halo_conv_forward(c, L, p, xs[c.rank()], &ctx, &st[c.rank()]);
    auto g = co_await cpar::halo_conv_backward(c, L, p, ctx, dys[c.rank()]);
    cdx[c.rank()] = g.dx;
    dw0 += g.dw0;
    dw1 += g.dw1;
  });
  measure(1, [&](sim::Comm& c) -> sim::Task<> {
    sy[c.rank()] = co_await cpar::value_shift_forward(c, L, xs[c.rank()]);
    sdx[c.rank()] = co_await cpar::value_shift_backward(c, L, dys[c.rank()]);
  });
  measure(2, [&](sim::Comm& c) -> sim::Task<> {
    const int r = c.rank();
    auto fwd = co_await cpar::ring_attention_forward(c, L, qs[r], ks[r], vs[r], heads, &st[r]);
    ao[r] = fwd.o;
    auto g = co_await cpar::ring_attention_backward(c, L, qs[r], ks[r], vs[r], fwd, dys[r], heads);
    adq[r] = g.dq;
    adk[r] = g.dk;
    adv[r] = g.dv;
  });

  auto un = [&](const std::vector<Matrix>& parts) { return cpar::unshard_sequence(L, parts); };
  const double conv_f = max_abs_diff(un(cy), conv_y);
  const double conv_b = std::max({max_abs_diff(un(cdx), conv_dx), max_abs_diff(dw0, conv_g.dw0), max_abs_diff(dw1, conv_g.dw1)});
  const double sh_f = max_abs_diff(un(sy), shift_y), sh_b = max_abs_diff(un(sdx), shift_dx);
  const double at_f = max_abs_diff(un(ao), attn.o);
  const double at_b = std::max({max_abs_diff(un(adq), dq), max_abs_diff(un(adk), dk), max_abs_diff(un(adv), dv)});
  std::size_t halo_msgs = 0;
  for (const auto& s : st) halo_msgs += s.halo_messages;

  Table t{{"op", "cp", "seq", "forward_max_err", "backward_max_err", "equivalent", "messages", "bytes"}, {}};
  auto row = [&](const char* op, double fe, double be, const Traffic& x) {
    t.add({op, cp, seq, fe, be, fe <= 1e-12 && be <= 1e-10, x.messages, x.elems * sizeof(double)});
  };
  row("cca_conv", conv_f, conv_b, tr[0]);
  row("value_shift", sh_f, sh_b, tr[1]);
  row("ring_attention", at_f, at_b, tr[2]);
  t.add({"halo_forward", cp, seq, nullptr, nullptr, true, halo_msgs, halo_msgs * p.halo() * channels * sizeof(double)});
  return t;
}

// ---- train -----------------------------------------------------------------

inline zero1::ZeroConfig toy_zero_config(zero1::Strategy s) {
  zero1::ZeroConfig c;
  c.opt.muon.eta = 0.05;
  c.opt.muon.delta = 0.1;
  c.opt.adamw_delta = 0.01;
  c.strategy = s;
  return c;
}

struct TrainReport {
  Table losses;
  Table transcript;
  Table memory;
};

inline Table memory_table(const zero1::MemoryReport& rep) {
  Table t{{"strategy", "rank", "persistent_bytes", "transient_bytes", "peak_bytes", "transient_share"}, {}};
  for (std::size_t r = 0; r < rep.ranks.size(); ++r) {
    const auto& m = rep.ranks[r];
    t.add({zero1::to_string(rep.strategy), r, m.persistent_bytes, m.transient_bytes, m.peak_bytes(),
           m.peak_bytes() ? double(m.transient_bytes) / double(m.peak_bytes()) : 0.0});
  }
  return t;
}

inline TrainReport report_for(const zero1::DistributedTrainer& tr, std::size_t step_offset = 0) {
  TrainReport rep{{{"step", "loss"}, {}}, {{"rank", "messages_sent", "peak_transient_elems"}, {}}, {}};
  const auto& h = tr.loss_history();
  for (std::size_t i = 0; i < h.size(); ++i) rep.losses.add({i + step_offset, h[i]});
  for (std::size_t r = 0; r < tr.stats().size(); ++r)
    rep.transcript.add({r, tr.stats()[r].messages_sent, tr.stats()[r].peak_transient_elems});
  rep.memory = memory_table(zero1::peak_memory_estimate(tr.layout(), tr.config().strategy));
  return rep;
}

inline TrainReport train_toy(int dp, int steps, zero1::Strategy s, std::uint64_t seed, std::size_t alignment) {
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  zero1::DistributedTrainer tr(zero1::ToyModel(seed), dp, toy_zero_config(s), alignment);
  tr.run(steps);
  return report_for(tr);
}

// ---- ckpt ------------------------------------------------------------------

inline Table checkpoint_files(const fs::path& dir) {
  const auto m = ckpt::read_manifest(dir);
  Table t{{"file", "bytes", "crc64"}, {}};
  for (const auto& f : m.at("files")) t.add({f.at("name"), f.at("bytes"), f.at("crc64")});
  const auto& w = m.at("weights");
  t.add({w.at("name"), w.at("bytes"), w.at("crc64")});
  return t;
}

/// Train the toy model, then write a checkpoint of its state.
/// hp_bytes = 8 keeps the masters exact, so a resume continues bit for bit.
inline Table ckpt_save(const fs::path& dir, int dp, int steps, zero1::Strategy s, std::uint64_t seed, std::size_t alignment,
                       std::size_t hp_bytes = 4) {
  zero1::DistributedTrainer tr(zero1::ToyModel(seed), dp, toy_zero_config(s), alignment);
  tr.run(steps);
  ckpt::SaveOptions opt;
  opt.hp_bytes = hp_bytes;
  opt.metadata = {{"model", "toy"}, {"seed", seed}, {"steps", steps}, {"strategy", zero1::to_string(s)}};
  ckpt::save_checkpoint(dir, tr.layout(), tr.shards(), opt);
  return checkpoint_files(dir);
}

inline Table ckpt_reshape(const fs::path& src, const fs::path& dst, int dp) {
  ckpt::reshape_checkpoint(src, dst, dp);
  return checkpoint_files(dst);
}

/// Resume a toy checkpoint and keep training.
inline TrainReport ckpt_resume(const fs::path& dir, int steps, std::uint64_t seed) {
  auto loaded = ckpt::load_checkpoint(dir);
  const auto meta = loaded.manifest.value("metadata", json::object());
  const auto strategy = zero1::parse_strategy(meta.value("strategy", std::string("sendrecv")));
  const auto w = loaded.weights();
  zero1::DistributedTrainer tr(zero1::ToyModel(meta.value("seed", seed)), loaded.layout, loaded.shards, w,
                               toy_zero_config(strategy));
  tr.run(steps);
  return report_for(tr, meta.value("steps", std::size_t{0}));
}

// ---- bench -----------------------------------------------------------------

inline Table bench_memory_table(const perf::StreamOptions& opt) {
  Table t{{"kernel", "elements", "elem_bytes", "bytes_moved", "best_s", "GBps", "verified", "threads"}, {}};
  for (const auto& r : perf::bench_memory(opt))
    t.add({perf::to_string(r.kernel), r.elements, r.elem_bytes, r.bytes_moved, r.best_seconds, r.gbps, r.verified,
           opt.threads});
  return t;
}

}  // namespace zaya::cli
