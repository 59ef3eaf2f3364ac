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
// zaya: planners, simulators, the toy trainer and checkpoint tools.
//
// Exit codes: 0 success, 1 bad input (flags, config, validation), 2 internal
// error.

#include <CLI11.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <iostream>
#include <optional>

#include "zaya/cli/commands.hpp"
#include "zaya/cli/config.hpp"

namespace {

using namespace zaya;
using namespace zaya::cli;

struct Globals {
  std::string config;
  std::string format;
  std::optional<std::uint64_t> seed;
  std::string out;
  RunConfig run;

  Format fmt() const { return parse_format(format.empty() ? run.format : format); }
  std::uint64_t rng_seed() const { return seed ? *seed : run.seed; }
  std::filesystem::path out_dir() const {
    if (!out.empty()) return out;
    if (!run.out_dir.empty()) return run.out_dir;
    return default_out_dir();
  }
};

void emit(const Globals& g, const Table& t) { write_table(std::cout, t, g.fmt()); }

// Write to <out>/<name>.<ext> and also echo to stdout.
void emit_file(const Globals& g, const Table& t, const std::string& name) {
  const auto dir = g.out_dir();
  std::filesystem::create_directories(dir);
  const auto path = dir / (name + (g.fmt() == Format::csv ? ".csv" : ".json"));
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  write_table(f, t, g.fmt());
}

net::ModelConfig model_from(const Globals& g, const std::string& preset) {
  return preset.empty() ? g.run.model : net::preset(preset);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zaya: training-infrastructure planners and simulators"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "INI config file ([run], [model], [topology])")->check(CLI::ExistingFile);
  app.add_option("--format", g.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--seed", g.seed, "seed for every random choice");
  app.add_option("--out", g.out, "output directory (default $ZAYA_OUT_DIR, else .)");

  std::function<void()> action;

  // ---- plan ----------------------------------------------------------------
  auto* plan = app.add_subcommand("plan", "closed-form planners");
  plan->require_subcommand(1);

  int xn = 0;
  double link_bw = 64e9, bmax = 0;
  std::string mode = "xgmi";
  auto* xgmi = plan->add_subcommand("xgmi", "intra-node bandwidth vs. group size");
  xgmi->add_option("--n", xn, "GPUs in the group (0 = all of 1..8)")->check(CLI::Range(0, 8));
  xgmi->add_option("--link-bw", link_bw, "per-link bandwidth, bytes/s");
  xgmi->add_option("--mode", mode)->check(CLI::IsMember({"xgmi", "switched"}));
  xgmi->add_option("--bmax", bmax, "switch bandwidth or cap, bytes/s");
  xgmi->callback([&] { action = [&] { emit(g, plan_xgmi(xn, link_bw, perf::parse_intra_mode(mode), bmax)); }; });

  double alpha = 10e-6, beta = 50e9, eps = 0.05;
  std::string samples;
  auto* fusion = plan->add_subcommand("fusion", "fusion buffer size at the saturation point");
  fusion->add_option("--alpha", alpha, "latency, seconds");
  fusion->add_option("--beta", beta, "asymptotic bandwidth, bytes/s");
  fusion->add_option("--eps", eps, "allowed shortfall from beta");
  fusion->add_option("--samples", samples, "fit alpha/beta from a bytes,seconds CSV instead")->check(CLI::ExistingFile);
  fusion->callback([&] {
    action = [&] {
      perf::AlphaBeta ab{alpha, beta, alpha};
      if (!samples.empty()) ab = perf::fit_alpha_beta(read_samples(samples));
      emit(g, plan_fusion(ab, eps));
    };
  });

  perf::StoragePlan sp{4096, 4096, 4, 4096, 2.5, 70000, 1, 0};
  auto* storage = plan->add_subcommand("storage", "data-loader IOPS plan");
  storage->add_option("--G", sp.G, "global batch, sequences");
  storage->add_option("--s", sp.s, "tokens per sequence");
  storage->add_option("--b", sp.b, "bytes per token");
  storage->add_option("--page", sp.P, "page size, bytes");
  storage->add_option("--t", sp.t, "iteration time, seconds");
  storage->add_option("--iops", sp.I_max, "IOPS budget");
  storage->add_option("--sigma", sp.sigma, "scatter factor");
  storage->add_option("--m", sp.m, "extra page faults per sample");
  storage->callback([&] { action = [&] { emit(g, plan_storage(sp)); }; });

  double pm = -1, pa = -1, blp = 2, bhp = 4;
  int dp = 1;
  std::string preset;
  std::size_t alignment = 64;
  auto add_ckpt_plan = [&](CLI::App* sub) {
    sub->add_option("--pm", pm, "Muon parameter count");
    sub->add_option("--pa", pa, "AdamW parameter count");
    sub->add_option("--blp", blp, "bytes per low-precision weight");
    sub->add_option("--bhp", bhp, "bytes per optimizer-state element");
    sub->add_option("--dp", dp, "data-parallel degree")->check(CLI::PositiveNumber);
    sub->add_option("--preset", preset, "count parameters from a model preset");
    sub->callback([&] {
      action = [&] {
        if (pm < 0 || pa < 0) {
          const auto c = count_params(net::param_specs(model_from(g, preset)));
          if (pm < 0) pm = c.muon;
          if (pa < 0) pa = c.adamw;
        }
        emit(g, plan_checkpoint(pm, pa, blp, bhp, dp));
      };
    });
  };
  add_ckpt_plan(plan->add_subcommand("checkpoint", "checkpoint byte sizes"));

  auto* sizing = plan->add_subcommand("sizing", "per-rank GEMM shapes and FLOPs");
  sizing->add_option("--preset", preset);
  sizing->callback([&] { action = [&] { emit(g, plan_sizing(model_from(g, preset))); }; });

  std::vector<double> seqs{4096, 8192, 16384, 32768};
  double experts = 16, band = 0.5;
  auto* bands = plan->add_subcommand("bands", "MoE per-expert token bands");
  bands->add_option("--s", seqs, "sequence lengths");
  bands->add_option("--E", experts, "experts per layer");
  bands->add_option("--band", band, "relative tolerance");
  bands->callback([&] { action = [&] { emit(g, plan_bands(seqs, experts, band)); }; });

  std::vector<int> dps{8, 64, 512};
  std::size_t state_bytes = 4, buffer_bytes = 2;
  auto* omem = plan->add_subcommand("optimizer-memory", "ZeRO-1 optimizer memory, SendRecv vs. AllGather");
  omem->add_option("--preset", preset);
  omem->add_option("--dp", dps, "data-parallel degrees")->check(CLI::PositiveNumber);
  omem->add_option("--state-bytes", state_bytes, "bytes per optimizer-state element");
  omem->add_option("--buffer-bytes", buffer_bytes, "bytes per reconstruction-buffer element");
  omem->add_option("--alignment", alignment, "shard alignment in elements")->check(CLI::PositiveNumber);
  omem->callback([&] {
    action = [&] { emit(g, plan_optimizer_memory(model_from(g, preset), dps, state_bytes, buffer_bytes, alignment)); };
  });

  // ---- lint ----------------------------------------------------------------
  auto* lint = app.add_subcommand("lint", "model checks");
  lint->require_subcommand(1);
  std::size_t tp = 0;
  auto* lsz = lint->add_subcommand("sizing", "GEMM-friendly sizing rules");
  lsz->add_option("--preset", preset);
  lsz->add_option("--t", tp, "tensor-parallel degree (default: the model's t)");
  lsz->callback([&] {
    action = [&] {
      const auto m = model_from(g, preset);
      const auto r = lint_sizing(m, tp ? tp : m.t);
      if (g.fmt() == Format::json) {
        std::cout << json{{"violations", r.violations}, {"advisories", r.advisories}, {"findings", to_json(r.findings)}}.dump(2)
                  << '\n';
      } else {
        std::cout << r.summary() << '\n';
        if (!r.findings.rows.empty()) write_csv(std::cout, r.findings);
      }
    };
  });

  // ---- sim -----------------------------------------------------------------
  auto* simc = app.add_subcommand("sim", "simulated fabric");
  simc->require_subcommand(1);
  std::vector<std::string> kinds{"allreduce", "allgather", "reducescatter", "alltoall", "broadcast"};
  std::vector<int> ranks{8};
  std::vector<double> sizes{1 << 20, 1 << 26};
  auto* coll = simc->add_subcommand("collective", "cost model + functional check per collective");
  coll->add_option("--kind", kinds);
  coll->add_option("--ranks", ranks)->check(CLI::PositiveNumber);
  coll->add_option("--bytes", sizes);
  coll->callback([&] {
    action = [&] {
      std::vector<sim::CollectiveKind> ks;
      for (const auto& k : kinds) ks.push_back(sim::parse_collective(k));
      emit(g, sim_collective(g.run.topology, ks, ranks, sizes, g.rng_seed()));
    };
  });
  int cpd = 2;
  std::size_t seq = 16;
  auto* cpc = simc->add_subcommand("cp", "context-parallel conv, value shift and ring attention vs. serial");
  cpc->add_option("--cp", cpd)->check(CLI::PositiveNumber);
  cpc->add_option("--seq", seq);
  cpc->callback([&] { action = [&] { emit(g, sim_cp(cpd, seq, g.rng_seed())); }; });

  // ---- train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "toy training");
  train->require_subcommand(1);
  int steps = 10;
  std::string strategy = "sendrecv";
  auto* toy = train->add_subcommand("toy", "ZeRO-1 distributed Muon on the toy model");
  toy->add_option("--dp", dp)->check(CLI::PositiveNumber);
  toy->add_option("--steps", steps)->check(CLI::NonNegativeNumber);
  toy->add_option("--strategy", strategy)->check(CLI::IsMember({"sendrecv", "allgather"}));
  toy->add_option("--alignment", alignment, "shard alignment in elements")->check(CLI::PositiveNumber);
  toy->callback([&] {
    action = [&] {
      const auto r = train_toy(dp, steps, zero1::parse_strategy(strategy), g.rng_seed(), alignment);
      emit(g, r.losses);
      emit_file(g, r.losses, "loss");
      emit_file(g, r.transcript, "transcript");
      emit_file(g, r.memory, "memory");
    };
  });

  // ---- ckpt ----------------------------------------------------------------
  auto* ck = app.add_subcommand("ckpt", "checkpoint tools");
  ck->require_subcommand(1);
  add_ckpt_plan(ck->add_subcommand("plan", "checkpoint byte sizes"));
  std::string dir, dst;
  auto* save = ck->add_subcommand("save", "train the toy model and save a checkpoint");
  save->add_option("--dir", dir)->required();
  save->add_option("--dp", dp)->check(CLI::PositiveNumber);
  save->add_option("--steps", steps)->check(CLI::NonNegativeNumber);
  save->add_option("--strategy", strategy)->check(CLI::IsMember({"sendrecv", "allgather"}));
  save->add_option("--alignment", alignment)->check(CLI::PositiveNumber);
  std::size_t hp_bytes = 4;
  save->add_option("--hp-bytes", hp_bytes, "bytes per stored optimizer element (4 or 8)")->check(CLI::IsMember({4, 8}));
  save->callback([&] {
    action = [&] { emit(g, ckpt_save(dir, dp, steps, zero1::parse_strategy(strategy), g.rng_seed(), alignment, hp_bytes)); };
  });
  int new_dp = 1;
  auto* reshape = ck->add_subcommand("reshape", "re-shard a checkpoint for a new dp degree");
  reshape->add_option("--src", dir)->required()->check(CLI::ExistingDirectory);
  reshape->add_option("--dst", dst)->required();
  reshape->add_option("--dp", new_dp)->required()->check(CLI::PositiveNumber);
  reshape->callback([&] { action = [&] { emit(g, ckpt_reshape(dir, dst, new_dp)); }; });
  auto* resume = ck->add_subcommand("resume", "load a toy checkpoint and keep training");
  resume->add_option("--dir", dir)->required()->check(CLI::ExistingDirectory);
  resume->add_option("--steps", steps)->check(CLI::NonNegativeNumber);
  resume->callback([&] { action = [&] { emit(g, ckpt_resume(dir, steps, g.rng_seed()).losses); }; });

  // ---- bench ---------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "local microbenchmarks");
  bench->require_subcommand(1);
  perf::StreamOptions so;
  std::vector<double> mib{64};
  std::vector<std::string> kernels{"copy", "scale", "add", "triad"};
  auto* mem = bench->add_subcommand("memory", "STREAM copy/scale/add/triad");
  mem->add_option("--size-mib", mib, "per-array buffer sizes, MiB");
  mem->add_option("--kernel", kernels)->check(CLI::IsMember({"copy", "scale", "add", "triad"}));
  mem->add_option("--repeats", so.repeats)->check(CLI::Range(3, 1000));
  mem->add_option("--threads", so.threads)->check(CLI::Range(1, 1024));
  mem->callback([&] {
    action = [&] {
      so.buffer_bytes.clear();
      for (double m : mib) so.buffer_bytes.push_back(static_cast<std::size_t>(m * (1 << 20)));
      so.kernels.clear();
      for (const auto& k : kernels) so.kernels.push_back(perf::parse_stream_kernel(k));
      emit(g, bench_memory_table(so));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (!g.config.empty()) g.run = load_config(g.config);
    if (action) action();
    return 0;
  } catch (const std::invalid_argument& e) {  // ShapeError, ConfigError
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const boost::property_tree::ptree_error& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 1;
  } catch (const zaya::ckpt::CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
