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

// GEMM arithmetic and the model-sizing rules.

#include <cmath>
#include <string>
#include <vector>

#include "zaya/zayanet/config.hpp"

namespace zaya::perf {

inline constexpr double kPeakReadyFlops = 2e11;

struct GemmFlops {
  double flops = 0;
  bool peak_ready = false;
};

inline GemmFlops gemm_flops(double M, double N, double K) {
  if (!(M > 0 && N > 0 && K > 0)) throw ConfigError("gemm_flops: dimensions must be positive");
  const double f = 2.0 * M * N * K;
  return {f, f >= kPeakReadyFlops};
}

struct GemmShape {
  std::string name;
  std::size_t M = 0, N = 0, K = 0;
};

/// Per-rank GEMMs of one layer plus the LM head, as (M x K) x (K x N).
inline std::vector<GemmShape> model_gemms(const net::ModelConfig& c) {
  c.validate();
  const std::size_t bs = c.b_micro * c.s, dh = c.d_h(), tau = c.s / c.E;
  return {
      {"cca_q_proj", bs, c.a_q * dh / c.t, c.h},
      {"cca_k_proj", bs, c.g * dh / c.t, c.h},
      {"cca_v1_proj", bs, c.g * dh / (2 * c.t), c.h},
      {"cca_v2_proj", bs, c.g * dh / (2 * c.t), c.h},
      {"attn_out_proj", bs, c.h, c.a_q * dh / c.t},
      {"router_down", bs, c.D, c.h},
      {"router_mlp1", bs, c.D, c.D},
      {"router_mlp2", bs, c.D, c.D},
      {"router_logits", bs, c.E, c.D},
      {"expert_fc1", tau, c.f, c.h},
      {"expert_fc2", tau, c.h, c.f_o},
      {"lm_head", bs, c.v, c.h},
  };
}

enum class Severity { violation, advisory };

inline const char* to_string(Severity s) { return s == Severity::violation ? "violation" : "advisory"; }

struct LintFinding {
  std::string rule;
  std::string detail;
  Severity severity = Severity::violation;
};

struct LintReport {
  std::vector<LintFinding> findings;

  std::size_t count(Severity s) const {
    std::size_t n = 0;
    for (const auto& f : findings) n += f.severity == s;
    return n;
  }
  std::size_t violations() const { return count(Severity::violation); }
};

namespace detail {

// Multiples of 64 pass; multiples of 8 that stop short of 64 only earn an
// advisory since the benefit is smaller but not zero.
inline void pow2_rule(LintReport& rep, const std::string& rule, double value) {
  const bool integral = value == std::floor(value);
  const auto v = static_cast<long long>(value);
  if (integral && v > 0 && v % 64 == 0) return;
  if (integral && v > 0 && v % 8 == 0) {
    rep.findings.push_back({rule, zaya::detail::concat(rule, " = ", v, " is a multiple of ", v % 32 == 0 ? 32 : v % 16 == 0 ? 16 : 8,
                                                       " but not 64"),
                            Severity::advisory});
    return;
  }
  rep.findings.push_back({rule, zaya::detail::concat(rule, " = ", value, " is not divisible by 64")});
}

}  // namespace detail

inline LintReport sizing_lint(const net::ModelConfig& c, std::size_t t) {
  if (t == 0) throw ConfigError("sizing_lint: t must be >= 1");
  LintReport rep;
  if (c.v % 64 != 0) rep.findings.push_back({"v % 64", zaya::detail::concat("v % 64 != 0 (v = ", c.v, ")")});
  detail::pow2_rule(rep, "b*s", double(c.b_micro * c.s));
  if (c.a == 0 || c.h % c.a != 0)
    rep.findings.push_back({"h/a", zaya::detail::concat("h/a is not an integer (h = ", c.h, ", a = ", c.a, ")")});
  else
    detail::pow2_rule(rep, "h/a", double(c.h / c.a));
  if (c.h % t != 0)
    rep.findings.push_back({"h/t", zaya::detail::concat("h/t is not an integer (h = ", c.h, ", t = ", t, ")")});
  else
    detail::pow2_rule(rep, "h/t", double(c.h / t));
  for (std::size_t heads : {c.a, c.a_q, c.g}) {
    if ((c.b_micro * heads) % t != 0)
      rep.findings.push_back({"(b*a)/t", zaya::detail::concat("(b*a)/t not integer (b = ", c.b_micro, ", a = ", heads,
                                                              ", t = ", t, ")")});
  }
  return rep;
}

struct MoeBand {
  double center = 0, low = 0, high = 0;
};

inline MoeBand moe_bands(double s, double E, double band_frac) {
  if (!(E >= 1)) throw ConfigError("moe_bands: E must be >= 1");
  if (band_frac < 0) throw ConfigError("moe_bands: band fraction must be >= 0");
  const double c = s / E;
  return {c, c * (1 - band_frac), c * (1 + band_frac)};
}

}  // namespace zaya::perf
