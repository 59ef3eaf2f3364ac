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
#include <variant>
#include <vector>

#include "zaya/muon/adamw.hpp"
#include "zaya/muon/muon.hpp"

namespace zaya::muon {

enum class OptimizerKind { muon, adamw };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::muon ? "muon" : "adamw"; }

/// Shape of one trainable parameter. 1-D parameters are stored as 1 x n with
/// `matrix == false`.
struct ParamSpec {
  std::string name;
  std::size_t rows = 1;
  std::size_t cols = 1;
  bool matrix = true;
  // Embedding tables are 2-D but still trained with AdamW.
  bool force_adamw = false;

  std::size_t numel() const noexcept { return rows * cols; }
  OptimizerKind kind() const noexcept { return matrix && !force_adamw ? OptimizerKind::muon : OptimizerKind::adamw; }

  static ParamSpec mat(std::string n, std::size_t r, std::size_t c) { return {std::move(n), r, c, true, false}; }
  static ParamSpec vec(std::string n, std::size_t len) { return {std::move(n), 1, len, false, false}; }
};

struct HybridConfig {
  MuonConfig muon{};
  AdamWHyper adamw{};
  double adamw_delta = 0.0;
};

/// Reference optimizer on one rank: Muon for 2-D parameters, AdamW for the
/// rest. Owns master weights; `weights()` are what a forward pass consumes.
class HybridOptimizer {
 public:
  HybridOptimizer(std::vector<ParamSpec> specs, std::vector<Matrix> init, HybridConfig cfg)
      : specs_(std::move(specs)), cfg_(cfg) {
    cfg_.muon.validate();
    if (init.size() != specs_.size()) throw ShapeError("HybridOptimizer: one initial tensor per spec required");
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (init[i].rows() != specs_[i].rows || init[i].cols() != specs_[i].cols)
        throw ShapeError("HybridOptimizer: initial tensor shape differs from spec " + specs_[i].name);
      if (specs_[i].kind() == OptimizerKind::muon)
        states_.emplace_back(MuonState::for_weights(init[i]));
      else
        states_.emplace_back(AdamSlot{AdamWState::zeros(init[i].size(), cfg_.adamw), init[i]});
    }
  }

  void step(const std::vector<Matrix>& grads) {
    if (grads.size() != specs_.size()) throw ShapeError("HybridOptimizer::step: gradient count mismatch");
    ++step_;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (auto* m = std::get_if<MuonState>(&states_[i])) {
        muon_step(*m, grads[i], cfg_.muon);
      } else {
        auto& a = std::get<AdamSlot>(states_[i]);
        a.state.step = step_ - 1;
        adamw_step(a.state, a.weights, grads[i], cfg_.muon.eta, cfg_.adamw_delta);
      }
    }
  }

  std::vector<Matrix> weights() const {
    std::vector<Matrix> out;
    out.reserve(states_.size());
    for (const auto& s : states_) {
      if (const auto* m = std::get_if<MuonState>(&s))
        out.push_back(m->master_weights);
      else
        out.push_back(std::get<AdamSlot>(s).weights);
    }
    return out;
  }

  const std::vector<ParamSpec>& specs() const noexcept { return specs_; }
  const HybridConfig& config() const noexcept { return cfg_; }
  long steps_taken() const noexcept { return step_; }

  struct AdamSlot {
    AdamWState state;
    Matrix weights;
  };
  using Slot = std::variant<MuonState, AdamSlot>;
  const std::vector<Slot>& slots() const noexcept { return states_; }

 private:
  std::vector<ParamSpec> specs_;
  HybridConfig cfg_;
  std::vector<Slot> states_;
  long step_ = 0;
};

/// Muon is defined only for 2-D parameters.
inline void require_matrix_param(const ParamSpec& p) {
  if (!p.matrix) throw ConfigError("Muon can only be applied to 2-D parameters; '" + p.name + "' is 1-D");
}

}  // namespace zaya::muon
