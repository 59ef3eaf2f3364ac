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

// INI-style run configuration.
//
//   [run]       seed, format, out
//   [model]     preset, then any ModelConfig field (h, a, a_q, g, L, v, E, k,
//               D, f, f_o, k0, k1, s, b_micro, t) as an override
//   [topology]  ranks_per_node, nodes, link_bw, b_max, nic_bw, mode,
//               alpha_intra, alpha_inter, cross_rail_alpha   (bytes/s, seconds)
//
// '#' and ';' start comments. Unknown keys are rejected.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "zaya/simfabric/cost_model.hpp"
#include "zaya/zayanet/config.hpp"

namespace zaya::cli {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string format = "csv";
  std::filesystem::path out_dir;
  net::ModelConfig model = net::zaya1_base();
  sim::FabricTopology topology{};
};

/// Output directory: explicit flag, else $ZAYA_OUT_DIR, else the cwd.
inline std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("ZAYA_OUT_DIR"); env && *env) return env;
  return ".";
}

namespace detail {

template <class T>
T get(const boost::property_tree::ptree& sec, const std::string& key, const std::string& where) {
  try {
    return sec.get<T>(key);
  } catch (const boost::property_tree::ptree_error&) {
    throw ConfigError("config: bad value for " + where + "." + key);
  }
}

inline void reject_unknown(const boost::property_tree::ptree& sec, const std::string& name, const std::set<std::string>& ok) {
  for (const auto& [k, v] : sec)
    if (!ok.count(k)) throw ConfigError("config: unknown key '" + k + "' in [" + name + "]");
}

}  // namespace detail

inline void apply_model_overrides(net::ModelConfig& m, const boost::property_tree::ptree& sec) {
  std::map<std::string, std::size_t*> fields{{"h", &m.h}, {"a", &m.a}, {"a_q", &m.a_q}, {"g", &m.g}, {"L", &m.L},
                                             {"v", &m.v}, {"E", &m.E}, {"k", &m.k}, {"D", &m.D}, {"f", &m.f},
                                             {"f_o", &m.f_o}, {"k0", &m.k0}, {"k1", &m.k1}, {"s", &m.s},
                                             {"b_micro", &m.b_micro}, {"t", &m.t}};
  for (const auto& [k, v] : sec) {
    if (k == "preset") continue;
    auto it = fields.find(k);
    if (it == fields.end()) throw ConfigError("config: unknown key '" + k + "' in [model]");
    *it->second = detail::get<std::size_t>(sec, k, "model");
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig rc;
  for (const auto& [name, sec] : pt) {
    if (name == "run") {
      detail::reject_unknown(sec, name, {"seed", "format", "out"});
      if (sec.count("seed")) rc.seed = detail::get<std::uint64_t>(sec, "seed", name);
      if (sec.count("format")) rc.format = sec.get<std::string>("format");
      if (sec.count("out")) rc.out_dir = sec.get<std::string>("out");
    } else if (name == "model") {
      if (sec.count("preset")) rc.model = net::preset(sec.get<std::string>("preset"));
      apply_model_overrides(rc.model, sec);
      rc.model.name = sec.get<std::string>("preset", "custom");
      rc.model.validate();
    } else if (name == "topology") {
      detail::reject_unknown(sec, name, {"ranks_per_node", "nodes", "link_bw", "b_max", "nic_bw", "mode", "alpha_intra",
                                         "alpha_inter", "cross_rail_alpha"});
      auto& t = rc.topology;
      t.ranks_per_node = sec.get<int>("ranks_per_node", t.ranks_per_node);
      t.nodes = sec.get<int>("nodes", t.nodes);
      t.link_bw_intra = sec.get<double>("link_bw", t.link_bw_intra);
      t.bw_max_intra = sec.get<double>("b_max", t.bw_max_intra);
      t.nic_bw = sec.get<double>("nic_bw", t.nic_bw);
      if (sec.count("mode")) t.mode = perf::parse_intra_mode(sec.get<std::string>("mode"));
      t.alpha_intra = sec.get<double>("alpha_intra", t.alpha_intra);
      t.alpha_inter = sec.get<double>("alpha_inter", t.alpha_inter);
      t.cross_rail_alpha = sec.get<double>("cross_rail_alpha", t.cross_rail_alpha);
      t.validate();
    } else {
      throw ConfigError("config: unknown section [" + name + "]");
    }
  }
  parse_format(rc.format);
  return rc;
}

}  // namespace zaya::cli
