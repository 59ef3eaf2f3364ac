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
#include <gtest/gtest.h>

#include <random>

#include "zaya/simfabric/collectives.hpp"
#include "zaya/simfabric/cost_model.hpp"
#include "zaya/simfabric/fabric.hpp"
#include "zaya/simfabric/reference.hpp"
#include "test_oracles.hpp"

using namespace zaya;
using namespace zaya::sim;

TEST(PointToPoint, SendThenRecv) {
  Fabric f(2);
  Payload got;
  f.run([&](Comm& c) -> Task<> {
    if (c.rank() == 0) c.send(1, 7, {42.0});
    else got = co_await c.recv(0, 7);
    co_return;
  });
  EXPECT_EQ(got, Payload{42.0});
  ASSERT_EQ(f.transcript().size(), 2u);
  EXPECT_EQ(f.transcript()[0].kind, EventKind::send);
  EXPECT_EQ(f.transcript()[1].kind, EventKind::recv);
}

TEST(PointToPoint, ChannelIsFifo) {
  Fabric f(2);
  std::vector<double> got;
  f.run([&](Comm& c) -> Task<> {
    if (c.rank() == 0) {
      for (double v : {1.0, 2.0, 3.0}) c.send(1, 0, {v});
    } else {
      for (int i = 0; i < 3; ++i) got.push_back((co_await c.recv(0, 0))[0]);
    }
  });
  EXPECT_EQ(got, (std::vector<double>{1, 2, 3}));
}

TEST(PointToPoint, ReceiverBlocksUntilSenderRuns) {
  // Rank 0 waits on rank 2, which only sends after hearing from rank 1.
  Fabric f(3);
  std::vector<double> got;
  f.run([&](Comm& c) -> Task<> {
    if (c.rank() == 0) got = co_await c.recv(2, 1);
    if (c.rank() == 1) c.send(2, 0, {5});
    if (c.rank() == 2) {
      auto v = co_await c.recv(1, 0);
      c.send(0, 1, {v[0] + 1});
    }
  });
  EXPECT_EQ(got, Payload{6});
}

TEST(PointToPoint, TagsSeparateChannels) {
  Fabric f(2);
  Payload a, b;
  f.run([&](Comm& c) -> Task<> {
    if (c.rank() == 0) {
      c.send(1, 1, {1});
      c.send(1, 2, {2});
    } else {
      b = co_await c.recv(0, 2);
      a = co_await c.recv(0, 1);
    }
  });
  EXPECT_EQ(a, Payload{1});
  EXPECT_EQ(b, Payload{2});
}

TEST(Deadlock, MutualRecvIsReportedWithBothRanks) {
  Fabric f(2);
  try {
    f.run([&](Comm& c) -> Task<> {
      co_await c.recv(1 - c.rank(), 0);
      c.send(1 - c.rank(), 0, {1});
    });
    FAIL() << "expected deadlock";
  } catch (const DeadlockError& e) {
    std::vector<int> cyc = e.cycle;
    std::sort(cyc.begin(), cyc.end());
    EXPECT_EQ(cyc, (std::vector<int>{0, 1}));
    EXPECT_NE(std::string(e.what()).find("rank 0 waits on rank 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("rank 1 waits on rank 0"), std::string::npos);
  }
}

TEST(Deadlock, ThreeRankCycleAmongBystanders) {
  Fabric f(4);
  try {
    f.run([&](Comm& c) -> Task<> {
      if (c.rank() < 3) co_await c.recv((c.rank() + 1) % 3, 0);
    });
    FAIL() << "expected deadlock";
  } catch (const DeadlockError& e) {
    std::vector<int> cyc = e.cycle;
    std::sort(cyc.begin(), cyc.end());
    EXPECT_EQ(cyc, (std::vector<int>{0, 1, 2}));
  }
}

TEST(Deadlock, WaitingOnFinishedRank) {
  Fabric f(2);
  EXPECT_THROW(f.run([&](Comm& c) -> Task<> {
    if (c.rank() == 0) co_await c.recv(1, 0);
  }),
               DeadlockError);
}

TEST(Fabric, ExceptionsInRankProgramsPropagate) {
  Fabric f(2);
  EXPECT_THROW(f.run([&](Comm& c) -> Task<> {
    if (c.rank() == 1) throw std::runtime_error("boom");
    co_return;
  }),
               std::runtime_error);
}

TEST(Fabric, SendToMissingRankFails) {
  Fabric f(2);
  EXPECT_THROW(f.run([&](Comm& c) -> Task<> {
    c.send(5, 0, {});
    co_return;
  }),
               FabricError);
}

TEST(Collectives, AllreduceOfRankIds) {
  Fabric f(4);
  auto out = run_collective(f, CollectiveKind::allreduce, {{0}, {1}, {2}, {3}});
  for (const auto& v : out) EXPECT_EQ(v, Payload{6});
}

TEST(Collectives, AllgatherOfRankIds) {
  Fabric f(3);
  auto out = run_collective(f, CollectiveKind::allgather, {{0}, {1}, {2}});
  for (const auto& v : out) EXPECT_EQ(v, (Payload{0, 1, 2}));
}

TEST(Collectives, ReduceScatterThenAllgatherEqualsAllreduce) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d;
  std::vector<Payload> in(8, Payload(37));
  for (auto& v : in)
    for (auto& x : v) x = d(rng);
  Fabric f(8);
  std::vector<Payload> composed(8);
  f.run([&](Comm& c) -> Task<> {
    const Group g = whole_world(c);
    Payload mine = co_await reducescatter(c, g, in[c.rank()]);
    // chunks are uneven (37 over 8), so gather through padded equal blocks
    Payload padded(6, 0.0);
    std::copy(mine.begin(), mine.end(), padded.begin());
    padded.back() = static_cast<double>(mine.size());
    Payload all = co_await allgather(c, g, padded);
    for (int r = 0; r < 8; ++r)
      composed[c.rank()].insert(composed[c.rank()].end(), all.begin() + 6 * r,
                                all.begin() + 6 * r + static_cast<long>(all[6 * r + 5]));
  });
  const auto direct = run_collective(f, CollectiveKind::allreduce, in);
  for (int r = 0; r < 8; ++r) EXPECT_EQ(composed[r], direct[r]);
}

TEST(Collectives, MismatchedShapesAreRejected) {
  Fabric f(3);
  EXPECT_THROW(run_collective(f, CollectiveKind::allgather, {{1}, {1, 2}, {3}}), ShapeError);
  EXPECT_THROW(run_collective(f, CollectiveKind::alltoall, {{1, 2}, {1, 2}, {3, 4}}), ShapeError);
}

TEST(Collectives, EmptyGroupAndNonMemberAreRejected) {
  Fabric f(2);
  EXPECT_THROW(f.run([&](Comm& c) -> Task<> { co_await allreduce(c, Group{}, {1.0}); }), ShapeError);
  EXPECT_THROW(f.run([&](Comm& c) -> Task<> { co_await allreduce(c, Group{0}, {1.0}); }), ShapeError);
}

TEST(Collectives, SubgroupLeavesOthersIdle) {
  Fabric f(5);
  std::vector<Payload> out(5);
  f.run([&](Comm& c) -> Task<> {
    const Group g{1, 3, 4};
    if (c.rank() == 1 || c.rank() == 3 || c.rank() == 4) out[c.rank()] = co_await allreduce(c, g, {double(c.rank())});
  });
  EXPECT_EQ(out[1], Payload{8});
  EXPECT_EQ(out[4], Payload{8});
  EXPECT_TRUE(out[0].empty());
}

// Property: every collective matches its definition for all group sizes 2..16.
TEST(Collectives, MatchCentralDefinitionAcrossSizesAndSeeds) {
  for (int p = 2; p <= 16; ++p) {
    for (unsigned seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed * 100 + p);
      std::normal_distribution<double> d;
      const std::size_t n = static_cast<std::size_t>(p) * (1 + seed % 3);
      std::vector<Payload> in(p, Payload(n));
      for (auto& v : in)
        for (auto& x : v) x = d(rng);
      const std::size_t root = seed % p;
      for (auto kind : {CollectiveKind::allreduce, CollectiveKind::allgather, CollectiveKind::reducescatter,
                        CollectiveKind::alltoall, CollectiveKind::broadcast}) {
        Fabric f(p);
        const auto got = run_collective(f, kind, in, root);
        const auto want = oracle::collective(kind, in, root);
        ASSERT_LE(collective_error(got, want), 1e-12) << to_string(kind) << " p=" << p << " seed=" << seed;
      }
    }
  }
}

TEST(Collectives, TranscriptsAreDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d;
    std::vector<Payload> in(6, Payload(12));
    for (auto& v : in)
      for (auto& x : v) x = d(rng);
    Fabric f(6);
    auto out = run_collective(f, CollectiveKind::allreduce, in);
    run_collective(f, CollectiveKind::alltoall, in);
    return std::make_pair(f.transcript(), out);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  for (std::size_t r = 0; r < a.second.size(); ++r) EXPECT_TRUE(bitwise_equal(a.second[r], b.second[r]));
}

TEST(Collectives, RingTrafficVolume) {
  // ring allreduce sends 2(p-1) messages per rank, each 1/p of the payload
  Fabric f(4);
  run_collective(f, CollectiveKind::allreduce, std::vector<Payload>(4, Payload(16, 1.0)));
  EXPECT_EQ(f.messages_sent(), 4u * 2u * 3u);
  EXPECT_EQ(f.elems_sent(), 4u * 2u * 3u * 4u);
}

TEST(CostModel, ZeroBytesIsPureLatency) {
  FabricTopology t;
  EXPECT_EQ(predict_time(t, CollectiveKind::allreduce, 0, 8).seconds, t.alpha_intra);
}

TEST(CostModel, XgmiCeiling) {
  FabricTopology t;
  EXPECT_DOUBLE_EQ(predict_time(t, CollectiveKind::allgather, 1e9, 8).beta_eff, 448e9);
  EXPECT_DOUBLE_EQ(predict_time(t, CollectiveKind::allgather, 1e9, 2).beta_eff, 64e9);
  EXPECT_NEAR(448e9 / 450e9, 1.0, 0.01);
  t.mode = perf::IntraMode::switched;
  EXPECT_DOUBLE_EQ(predict_time(t, CollectiveKind::allgather, 1e9, 2).beta_eff, t.bw_max_intra);
}

TEST(CostModel, InterNodeUsesNicAndCrossRailPaysExtraHop) {
  FabricTopology t;
  t.nodes = 4;
  const auto same = predict_time(t, CollectiveKind::allreduce, 0, 32);
  const auto cross = predict_time(t, CollectiveKind::allreduce, 0, 32, true);
  EXPECT_EQ(same.scope, Scope::inter);
  EXPECT_DOUBLE_EQ(same.beta_eff, t.nic_bw);
  EXPECT_DOUBLE_EQ(cross.seconds - same.seconds, t.cross_rail_alpha);
}

TEST(CostModel, MeasuredBetaIsCappedByCeiling) {
  FabricTopology t;
  t.beta[{CollectiveKind::allreduce, Scope::intra}] = 300e9;
  EXPECT_DOUBLE_EQ(predict_time(t, CollectiveKind::allreduce, 1, 8).beta_eff, 300e9);
  t.beta[{CollectiveKind::allreduce, Scope::intra}] = 900e9;
  EXPECT_DOUBLE_EQ(predict_time(t, CollectiveKind::allreduce, 1, 8).beta_eff, 448e9);
}

TEST(CostModel, MonotoneAndSaturating) {
  FabricTopology t;
  t.nodes = 2;
  for (auto kind : {CollectiveKind::allreduce, CollectiveKind::allgather, CollectiveKind::reducescatter,
                    CollectiveKind::alltoall, CollectiveKind::broadcast}) {
    for (int n : {2, 4, 8, 16}) {
      double prev = 0;
      for (double m = 0; m < 1e10; m = m * 2 + 1) {
        const double s = predict_time(t, kind, m, n).seconds;
        EXPECT_GE(s, prev);
        prev = s;
      }
      const auto probe = predict_time(t, kind, 1, n);
      const double alpha = probe.scope == Scope::intra ? t.alpha_intra : t.alpha_inter;
      const auto big = predict_time(t, kind, 100 * alpha * probe.beta_eff, n);
      EXPECT_GE(big.busbw, 0.95 * big.beta_eff) << to_string(kind) << " n=" << n;
      EXPECT_LE(big.busbw, big.beta_eff);
    }
  }
}

TEST(CostModel, RejectsBadInputs) {
  FabricTopology t;
  EXPECT_THROW(predict_time(t, CollectiveKind::allreduce, -1, 2), ConfigError);
  EXPECT_THROW(predict_time(t, CollectiveKind::allreduce, 1, 9), ConfigError);
  EXPECT_THROW(parse_collective("gather"), ConfigError);
  t.ranks_per_node = 9;
  EXPECT_THROW(predict_time(t, CollectiveKind::allreduce, 1, 2), ConfigError);
}
