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

// Drivers that train the toy model either on one rank with HybridOptimizer or
// data-parallel with ZeRO-1 over a simulated fabric.

#include <vector>

#include "zaya/muon/optimizer.hpp"
#include "zaya/simfabric/fabric.hpp"
#include "zaya/zero1/distributed_muon.hpp"
#include "zaya/zero1/toy_model.hpp"

namespace zaya::zero1 {

struct SingleRun {
  std::vector<double> losses;  // loss before each step
  std::vector<std::vector<Matrix>> weights;  // after each step
};

inline SingleRun train_single(const ToyModel& model, int steps, const muon::HybridConfig& cfg) {
  muon::HybridOptimizer opt(model.specs(), model.initial_weights(), cfg);
  SingleRun out;
  for (int s = 0; s < steps; ++s) {
    auto [loss, grads] = model.loss_and_grads(opt.weights());
    out.losses.push_back(loss);
    opt.step(grads);
    out.weights.push_back(opt.weights());
  }
  return out;
}

class DistributedTrainer {
 public:
  DistributedTrainer(const ToyModel& model, int dp, ZeroConfig cfg, std::size_t alignment = 64)
      : model_(model), cfg_(cfg), layout_(build_shards(model.specs(), dp, alignment)), fabric_(dp) {
    weights_ = model.initial_weights();
    shards_ = init_shards(layout_, weights_);
    stats_.resize(static_cast<std::size_t>(dp));
  }

  /// Resume from saved shards; `weights` must be the matching working weights.
  DistributedTrainer(const ToyModel& model, ShardLayout layout, std::vector<RankShard> shards,
                     std::vector<Matrix> weights, ZeroConfig cfg)
      : model_(model),
        cfg_(cfg),
        layout_(std::move(layout)),
        fabric_(layout_.dp_degree),
        shards_(std::move(shards)),
        weights_(std::move(weights)) {
    if (shards_.size() != static_cast<std::size_t>(layout_.dp_degree))
      throw ShapeError("DistributedTrainer: one shard per rank required");
    stats_.resize(shards_.size());
  }

  /// Run `steps` optimizer steps; returns the loss before each.
  std::vector<double> run(int steps) {
    std::vector<double> losses;
    std::vector<std::vector<Matrix>> finals(shards_.size());
    const std::vector<Matrix> start = weights_;
    fabric_.run([&](sim::Comm& c) -> sim::Task<> {
      std::vector<Matrix> w = start;
      for (int s = 0; s < steps; ++s) {
        auto [loss, grads] = model_.loss_and_grads(w);
        if (c.rank() == 0) losses.push_back(loss);
        w = co_await distributed_muon_step(c, layout_, shards_[c.rank()], grads, cfg_, &stats_[c.rank()]);
      }
      finals[c.rank()] = std::move(w);
    });
    for (const auto& f : finals)
      if (f != finals[0]) throw NumericError("DistributedTrainer: ranks disagree on the working weights");
    weights_ = std::move(finals[0]);
    history_.insert(history_.end(), losses.begin(), losses.end());
    return losses;
  }

  const std::vector<Matrix>& weights() const noexcept { return weights_; }
  const std::vector<RankShard>& shards() const noexcept { return shards_; }
  const ShardLayout& layout() const noexcept { return layout_; }
  const sim::Fabric& fabric() const noexcept { return fabric_; }
  const std::vector<StepStats>& stats() const noexcept { return stats_; }
  const std::vector<double>& loss_history() const noexcept { return history_; }
  const ZeroConfig& config() const noexcept { return cfg_; }

 private:
  ToyModel model_;
  ZeroConfig cfg_;
  ShardLayout layout_;
  sim::Fabric fabric_;
  std::vector<RankShard> shards_;
  std::vector<Matrix> weights_;
  std::vector<StepStats> stats_;
  std::vector<double> history_;
};

}  // namespace zaya::zero1
