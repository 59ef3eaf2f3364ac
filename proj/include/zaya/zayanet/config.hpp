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

#include <string>
#include <vector>

#include "zaya/muon/optimizer.hpp"
#include "zaya/numcore/matrix.hpp"

namespace zaya::net {

struct ModelConfig {
  std::string name = "custom";
  std::size_t h = 0;    // hidden size
  std::size_t a = 0;    // attention heads
  std::size_t a_q = 0;  // query heads used by CCA
  std::size_t g = 0;    // kv heads
  std::size_t L = 0;    // layers
  std::size_t v = 0;    // vocab
  std::size_t E = 0;    // experts per layer
  std::size_t k = 1;    // router top-k
  std::size_t D = 0;    // router dimension
  std::size_t f = 0;    // expert fc1 width
  std::size_t f_o = 0;  // post-activation width
  std::size_t k0 = 2, k1 = 2;
  std::size_t s = 0;  // sequence length
  std::size_t b_micro = 1;
  std::size_t t = 1;  // tensor parallel

  std::size_t d_h() const noexcept { return a ? h / a : 0; }

  void validate() const {
    if (h == 0 || a == 0 || h % a != 0) throw ConfigError(zaya::detail::concat("config: h=", h, " not divisible by a=", a));
    if (a_q == 0 || a_q > a) throw ConfigError("config: need 1 <= a_q <= a");
    if (g == 0 || g > a) throw ConfigError("config: need 1 <= g <= a");
    if (k < 1 || E < k) throw ConfigError(zaya::detail::concat("config: need 1 <= k <= E (k=", k, ", E=", E, ")"));
    if (f == 0 || f % 2 != 0 || f_o != f / 2) throw ConfigError("config: SwiGLU requires f even and f_o = f/2");
    if (D == 0) throw ConfigError("config: router dimension D must be > 0");
    if (k0 == 0 || k1 == 0) throw ConfigError("config: conv kernel widths must be >= 1");
    if (t == 0 || b_micro == 0) throw ConfigError("config: t and b_micro must be >= 1");
  }
};

inline ModelConfig zaya1_base() {
  ModelConfig c;
  c.name = "zaya1-base";
  c.h = 2048;
  c.a = 16;
  c.a_q = 8;
  c.g = 2;
  c.L = 40;
  c.v = 262272;
  c.E = 16;
  c.k = 1;
  c.D = 256;
  c.f = 4096;
  c.f_o = 2048;
  c.s = 4096;
  c.b_micro = 5;
  c.t = 1;
  return c;
}

/// Small enough for finite differences.
inline ModelConfig toy_config() {
  ModelConfig c;
  c.name = "toy";
  c.h = 8;
  c.a = 4;
  c.a_q = 2;
  c.g = 1;
  c.L = 2;
  c.v = 64;
  c.E = 4;
  c.k = 1;
  c.D = 4;
  c.f = 8;
  c.f_o = 4;
  c.s = 8;
  c.b_micro = 1;
  return c;
}

inline ModelConfig preset(const std::string& name) {
  if (name == "zaya1-base" || name == "zaya1") return zaya1_base();
  if (name == "toy") return toy_config();
  throw ConfigError("unknown model preset '" + name + "' (expected zaya1-base or toy)");
}

inline std::size_t router_param_count(const ModelConfig& c) { return c.h * c.D + 2 * c.D * c.D + c.D * c.E; }
inline std::size_t residual_scale_param_count(const ModelConfig& c) { return 2 * c.L * (2 * c.h); }

/// Every trainable tensor of the model, in a fixed order. The LM head is tied
/// to the embedding.
inline std::vector<muon::ParamSpec> param_specs(const ModelConfig& c) {
  c.validate();
  const std::size_t dh = c.d_h(), qk = (c.a_q + c.g) * dh, vhalf = c.g * dh / 2;
  std::vector<muon::ParamSpec> out;
  out.push_back({"embedding", c.v, c.h, true, true});
  for (std::size_t l = 0; l < c.L; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    out.push_back({p + "attn_norm", 1, c.h, false});
    out.push_back({p + "cca.q", c.h, c.a_q * dh});
    out.push_back({p + "cca.k", c.h, c.g * dh});
    out.push_back({p + "cca.v1", c.h, vhalf});
    out.push_back({p + "cca.v2", c.h, vhalf});
    // conv taps are tiny; AdamW
    out.push_back({p + "cca.conv0", qk, c.k0, true, true});
    out.push_back({p + "cca.conv1", qk, dh * c.k1, true, true});
    out.push_back({p + "cca.o", c.a_q * dh, c.h});
    out.push_back({p + "mlp_norm", 1, c.h, false});
    out.push_back({p + "router.down", c.h, c.D});
    out.push_back({p + "router.mlp1", c.D, c.D});
    out.push_back({p + "router.mlp2", c.D, c.D});
    out.push_back({p + "router.logits", c.D, c.E});
    out.push_back({p + "router.gamma", 1, 1, false});
    for (std::size_t e = 0; e < c.E; ++e) {
      out.push_back({p + "expert" + std::to_string(e) + ".fc1", c.h, c.f});
      out.push_back({p + "expert" + std::to_string(e) + ".fc2", c.f_o, c.h});
    }
    for (const char* w : {"res_scale.residual", "res_scale.input"}) {
      out.push_back({p + w + ".alpha", 1, c.h, false});
      out.push_back({p + w + ".bias", 1, c.h, false});
    }
  }
  out.push_back({"final_norm", 1, c.h, false});
  return out;
}

}  // namespace zaya::net
