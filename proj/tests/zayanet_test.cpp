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

#include <cmath>
#include <random>
#include <set>

#include "test_oracles.hpp"
#include "zaya/numcore/finite_diff.hpp"
#include "zaya/zayanet/moe.hpp"

using namespace zaya;
using namespace zaya::net;

namespace {

// ---- oracles ---------------------------------------------------------------

double erf_gelu(double x) { return x * 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Router scores straight from the formula, one token at a time.
Matrix router_scores_oracle(const Matrix& x, const RouterState& st) {
  const std::size_t T = x.rows(), h = x.cols(), D = st.dim(), E = st.experts();
  Matrix out(T, E);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> r(D, 0.0), a(D, 0.0), b(D, 0.0), z(E, 0.0);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < h; ++i) r[d] += x(t, i) * st.W_down(i, d);
      if (!st.prev_r.empty()) r[d] += st.gamma * st.prev_r(t, d);
    }
    double ms = 0;
    for (double v : r) ms += v * v / double(D);
    for (auto& v : r) v /= std::sqrt(ms + kRouterNormEps);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < D; ++i) a[d] += r[i] * st.mlp1(i, d);
    }
    for (auto& v : a) v = erf_gelu(v);
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t i = 0; i < D; ++i) b[d] += a[i] * st.mlp2(i, d);
    for (auto& v : b) v = erf_gelu(v);
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t i = 0; i < D; ++i) z[e] += b[i] * st.logits_w(i, e);
    double zs = 0;
    for (std::size_t e = 0; e < E; ++e) zs += std::exp(z[e]);
    for (std::size_t e = 0; e < E; ++e) out(t, e) = std::exp(z[e]) / zs;
  }
  return out;
}

Matrix expert_oracle(const ExpertWeights& w, const Matrix& x) {
  const std::size_t fo = w.fc2.rows();
  Matrix y(x.rows(), w.fc2.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    std::vector<double> act(fo);
    for (std::size_t j = 0; j < fo; ++j) {
      double g = 0, l = 0;
      for (std::size_t i = 0; i < x.cols(); ++i) {
        g += x(t, i) * w.fc1(i, j);
        l += x(t, i) * w.fc1(i, fo + j);
      }
      act[j] = g / (1 + std::exp(-g)) * l;
    }
    for (std::size_t c = 0; c < y.cols(); ++c)
      for (std::size_t j = 0; j < fo; ++j) y(t, c) += act[j] * w.fc2(j, c);
  }
  return y;
}

// Run every expert on every token, then pick rows. No dispatch at all.
Matrix moe_dense_oracle(const Matrix& x, const std::vector<ExpertWeights>& ex, const RouterOutput& route) {
  std::vector<Matrix> all;
  for (const auto& w : ex) all.push_back(expert_oracle(w, x));
  Matrix y(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t j = 0; j < route.chosen[t].size(); ++j)
      for (std::size_t c = 0; c < x.cols(); ++c) y(t, c) += route.probs(t, j) * all[route.chosen[t][j]](t, c);
  return y;
}

double dot(const Matrix& a, const Matrix& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.flat()[i] * b.flat()[i];
  return s;
}

ModelConfig toy() { return toy_config(); }

}  // namespace

// ---- config ----------------------------------------------------------------

TEST(ModelConfig, PresetsValidate) {
  EXPECT_NO_THROW(zaya1_base().validate());
  EXPECT_NO_THROW(toy().validate());
  EXPECT_EQ(zaya1_base().d_h(), 128u);
  auto c = toy();
  c.f_o = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy();
  c.k = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(ModelConfig, ParameterOverheads) {
  const auto z = zaya1_base();
  EXPECT_EQ(router_param_count(z), 2048u * 256 + 2u * 256 * 256 + 256u * 16);
  EXPECT_EQ(residual_scale_param_count(z), 2u * 40 * 2 * 2048);
  std::mt19937_64 rng(1);
  const auto c = toy();
  EXPECT_EQ(RouterState::random(c.h, c.D, c.E, rng).param_count(), router_param_count(c));
}

TEST(ModelConfig, ParamSpecsAreConsistent) {
  const auto c = zaya1_base();
  const auto specs = param_specs(c);
  std::size_t router = 0, res = 0;
  for (const auto& s : specs) {
    if (s.name.find("router.") != std::string::npos && s.name.find("gamma") == std::string::npos) router += s.numel();
    if (s.name.find("res_scale") != std::string::npos) res += s.numel();
  }
  EXPECT_EQ(router, c.L * router_param_count(c));
  EXPECT_EQ(res, residual_scale_param_count(c));
  EXPECT_EQ(specs.front().name, "embedding");
  EXPECT_EQ(specs.front().kind(), muon::OptimizerKind::adamw);
}

// ---- router ----------------------------------------------------------------

TEST(Router, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  const auto c = toy();
  auto st = RouterState::random(c.h, c.D, c.E, rng, 0.3);
  Matrix x = Matrix::gaussian(10, c.h, rng);
  st.prev_r = Matrix::gaussian(10, c.D, rng);
  auto out = router_forward(x, st, 2);
  EXPECT_LE(max_abs_diff(out.scores, router_scores_oracle(x, st)), 1e-12);
}

TEST(Router, ScoreRowsSumToOne) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto st = RouterState::random(16, 8, 8, rng);
    auto out = router_forward(Matrix::gaussian(32, 16, rng, 3.0), st, 1);
    for (std::size_t t = 0; t < 32; ++t) {
      double s = 0;
      for (double v : out.scores.row(t)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Router, BiasDominationForcesSelectionButNotProbability) {
  std::mt19937_64 rng(4);
  auto st = RouterState::random(8, 4, 6, rng);
  Matrix x = Matrix::gaussian(20, 8, rng);
  const auto plain = router_forward(x, st, 1);
  st.bias[4] = 1e9;
  const auto forced = router_forward(x, st, 1);
  for (std::size_t t = 0; t < 20; ++t) {
    EXPECT_EQ(forced.chosen[t][0], 4u);
    EXPECT_EQ(forced.probs(t, 0), plain.scores(t, 4));
  }
  EXPECT_EQ(forced.scores, plain.scores);
}

TEST(Router, ConstantShiftLeavesSelectionUnchanged) {
  std::mt19937_64 rng(5);
  Matrix z = Matrix::gaussian(12, 7, rng), shifted = z;
  for (auto& v : shifted.flat()) v += 41.5;
  for (std::size_t t = 0; t < z.rows(); ++t) EXPECT_EQ(topk(z.row(t), 3), topk(shifted.row(t), 3));
  softmax_rows(z);
  softmax_rows(shifted);
  EXPECT_LE(max_abs_diff(z, shifted), 1e-14);
}

TEST(Router, EqualLogitsGiveUniformScoresAndLowestIndex) {
  std::mt19937_64 rng(6);
  auto st = RouterState::random(8, 4, 5, rng);
  st.logits_w = Matrix(4, 5);
  auto out = router_forward(Matrix::gaussian(6, 8, rng), st, 2);
  for (std::size_t t = 0; t < 6; ++t) {
    for (double v : out.scores.row(t)) EXPECT_NEAR(v, 0.2, 1e-15);
    EXPECT_EQ(out.chosen[t], (std::vector<std::size_t>{0, 1}));
  }
}

TEST(Router, GammaZeroIgnoresPreviousLayer) {
  std::mt19937_64 rng(7);
  auto st = RouterState::random(8, 4, 4, rng, 0.0);
  Matrix x = Matrix::gaussian(9, 8, rng);
  const auto alone = router_forward(x, st, 1);
  st.prev_r = Matrix::gaussian(9, 4, rng, 10.0);
  const auto chained = router_forward(x, st, 1);
  EXPECT_EQ(alone.scores, chained.scores);
  EXPECT_EQ(alone.chosen, chained.chosen);
}

TEST(Router, EdaChainsRepresentations) {
  std::mt19937_64 rng(8);
  auto l0 = RouterState::random(8, 4, 4, rng, 0.0), l1 = RouterState::random(8, 4, 4, rng, 0.7);
  Matrix x = Matrix::gaussian(5, 8, rng);
  auto o0 = router_forward(x, l0, 1);
  l1.prev_r = o0.r;
  auto o1 = router_forward(x, l1, 1);
  EXPECT_LE(max_abs_diff(o1.r, gemm(x, l1.W_down) + 0.7 * o0.r), 1e-14);
  l1.prev_r = Matrix(3, 4);
  EXPECT_THROW(router_forward(x, l1, 1), ShapeError);
}

TEST(Router, NonFiniteInputRejected) {
  std::mt19937_64 rng(9);
  auto st = RouterState::random(4, 4, 4, rng);
  Matrix x(2, 4, 1.0);
  x(1, 2) = NAN;
  EXPECT_THROW(router_forward(x, st, 1), NumericError);
}

// ---- PID balancer ----------------------------------------------------------

TEST(PidBalancer, BalancedLoadsLeaveBiasAlone) {
  PIDBalancer bal(4);
  std::vector<double> bias(4, 0.25), loads(4, 0.25);
  for (int i = 0; i < 10; ++i) pid_bias_update(bal, loads, bias);
  for (double b : bias) EXPECT_EQ(b, 0.25);
  for (double v : bal.integral) EXPECT_EQ(v, 0.0);
}

TEST(PidBalancer, OverloadedExpertLosesBias) {
  PIDBalancer bal(2);
  std::vector<double> bias(2, 0.0), loads{0.9, 0.1};
  pid_bias_update(bal, loads, bias);
  EXPECT_LT(bias[0], 0.0);
  EXPECT_GT(bias[1], 0.0);
}

TEST(PidBalancer, RejectsNonDistributions) {
  PIDBalancer bal(3);
  std::vector<double> bias(3, 0.0);
  EXPECT_THROW(pid_bias_update(bal, std::vector<double>{0.5, 0.5, 0.5}, bias), ConfigError);
  EXPECT_THROW(pid_bias_update(bal, std::vector<double>{0.5, 0.5}, bias), ShapeError);
}

// Closed loop: a fresh batch of skewed scores every step, selection by
// argmax(score + bias), loads fed back into the balancer.
TEST(PidBalancer, DrivesSkewedStreamToBalance) {
  constexpr std::size_t E = 8, N = 16384;
  constexpr double skew = 1.62;  // logit offset giving expert 0 about 60% of tokens
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd;
  auto batch = [&] {
    Matrix s(N, E);
    for (auto& v : s.flat()) v = nd(rng);
    for (std::size_t t = 0; t < N; ++t) s(t, 0) += skew;
    softmax_rows(s);
    return s;
  };
  PIDBalancer bal(E);
  std::vector<double> bias(E, 0.0);
  auto loads_for = [&](const Matrix& s) {
    std::vector<double> load(E, 0.0);
    for (std::size_t t = 0; t < N; ++t) {
      std::size_t best = 0;
      for (std::size_t e = 1; e < E; ++e)
        if (s(t, e) + bias[e] > s(t, best) + bias[best]) best = e;
      load[best] += 1.0 / N;
    }
    return load;
  };
  const auto first = loads_for(batch());
  EXPECT_NEAR(first[0], 0.6, 0.03);
  std::vector<double> loads = first;
  // Every batch of the last 50 steps must be balanced, not just the final one.
  double worst_tail = 0.0;
  for (int step = 1; step <= 500; ++step) {
    pid_bias_update(bal, loads, bias);
    loads = loads_for(batch());
    if (step > 450) worst_tail = std::max(worst_tail, *std::max_element(loads.begin(), loads.end()));
  }
  EXPECT_LE(worst_tail, 1.2 / E);
}

// ---- residual scaling ------------------------------------------------------

TEST(ResidualScale, Examples) {
  std::mt19937_64 rng(11);
  Matrix x = Matrix::gaussian(3, 4, rng);
  EXPECT_EQ(residual_scale(x, ResidualScaleParams::identity(4)), x);
  EXPECT_EQ(residual_scale(x, {std::vector<double>(4, 0.0), std::vector<double>(4, 2.5)}), Matrix(3, 4, 2.5));
  EXPECT_EQ(residual_scale(Matrix{{3}}, {{2}, {1}}), (Matrix{{7}}));
  EXPECT_THROW(residual_scale(x, ResidualScaleParams::identity(3)), ShapeError);
}

// ---- CCA mixing ------------------------------------------------------------

TEST(CcaMix, IdentityTapsLeaveProjections) {
  std::mt19937_64 rng(12);
  const auto c = toy();
  auto p = CcaMixParams::random(c, rng);
  p.conv = CcaConvParams::identity(p.conv.channels, p.conv.groups);
  Matrix x = Matrix::gaussian(8, c.h, rng);
  auto out = cca_mix(x, p);
  EXPECT_LE(max_abs_diff(out.q, oracle::naive_product(x, p.Wq)), 1e-13);
  EXPECT_LE(max_abs_diff(out.k, oracle::naive_product(x, p.Wk)), 1e-13);
  EXPECT_LE(max_abs_diff(out.v1, oracle::naive_product(x, p.Wv1)), 1e-13);
}

TEST(CcaMix, SecondValueStreamIsDelayed) {
  std::mt19937_64 rng(13);
  const auto c = toy();
  auto p = CcaMixParams::random(c, rng);
  Matrix x = Matrix::gaussian(8, c.h, rng);
  const Matrix pre = oracle::naive_product(x, p.Wv2);
  auto out = cca_mix(x, p);
  for (std::size_t j = 0; j < pre.cols(); ++j) {
    EXPECT_EQ(out.v2(0, j), 0.0);
    for (std::size_t t = 1; t < 8; ++t) EXPECT_NEAR(out.v2(t, j), pre(t - 1, j), 1e-14);
  }
}

TEST(CcaMix, MatchesLoopOracle) {
  std::mt19937_64 rng(14);
  const auto c = toy();
  auto p = CcaMixParams::random(c, rng);
  Matrix x = Matrix::gaussian(8, c.h, rng);
  Matrix qk(8, p.conv.channels);
  const Matrix q = oracle::naive_product(x, p.Wq), k = oracle::naive_product(x, p.Wk);
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t j = 0; j < q.cols(); ++j) qk(t, j) = q(t, j);
    for (std::size_t j = 0; j < k.cols(); ++j) qk(t, q.cols() + j) = k(t, j);
  }
  const Matrix want = oracle::conv_oracle(p.conv, qk);
  auto out = cca_mix(x, p);
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t j = 0; j < q.cols(); ++j) EXPECT_NEAR(out.q(t, j), want(t, j), 1e-12);
    for (std::size_t j = 0; j < k.cols(); ++j) EXPECT_NEAR(out.k(t, j), want(t, q.cols() + j), 1e-12);
  }
}

TEST(CcaMix, RejectsShortSequence) {
  std::mt19937_64 rng(15);
  auto p = CcaMixParams::random(toy(), rng);
  EXPECT_THROW(cca_mix(Matrix(2, toy().h), p), ConfigError);
}

TEST(CcaMix, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(16);
  const auto c = toy();
  auto p = CcaMixParams::random(c, rng);
  Matrix x = Matrix::gaussian(8, c.h, rng);
  CcaMixOut probe{Matrix::gaussian(8, p.Wq.cols(), rng), Matrix::gaussian(8, p.Wk.cols(), rng),
                  Matrix::gaussian(8, p.Wv1.cols(), rng), Matrix::gaussian(8, p.Wv2.cols(), rng)};
  auto loss = [&](const Matrix& xx, const CcaMixParams& pp) {
    auto o = cca_mix(xx, pp);
    return dot(o.q, probe.q) + dot(o.k, probe.k) + dot(o.v1, probe.v1) + dot(o.v2, probe.v2);
  };
  const auto g = cca_mix_backward(x, p, probe);
  const double h = 1e-6;
  EXPECT_LE(max_rel_error(g.dx, finite_diff_grad([&](const Matrix& m) { return loss(m, p); }, x, h)), 1e-5);
  auto wrt = [&](Matrix CcaMixParams::*field) {
    return finite_diff_grad([&](const Matrix& m) { auto q = p; q.*field = m; return loss(x, q); }, p.*field, h);
  };
  EXPECT_LE(max_rel_error(g.dWq, wrt(&CcaMixParams::Wq)), 1e-5);
  EXPECT_LE(max_rel_error(g.dWk, wrt(&CcaMixParams::Wk)), 1e-5);
  EXPECT_LE(max_rel_error(g.dWv1, wrt(&CcaMixParams::Wv1)), 1e-5);
  EXPECT_LE(max_rel_error(g.dWv2, wrt(&CcaMixParams::Wv2)), 1e-5);
  EXPECT_LE(max_rel_error(g.dw0, finite_diff_grad([&](const Matrix& m) { auto q = p; q.conv.w0 = m; return loss(x, q); }, p.conv.w0, h)), 1e-5);
  EXPECT_LE(max_rel_error(g.dw1, finite_diff_grad([&](const Matrix& m) { auto q = p; q.conv.w1 = m; return loss(x, q); }, p.conv.w1, h)), 1e-5);
}

// ---- MoE -------------------------------------------------------------------

TEST(Moe, SingleExpertIsPlainMlp) {
  std::mt19937_64 rng(17);
  auto c = toy();
  c.E = 1;
  auto st = RouterState::random(c.h, c.D, 1, rng);
  std::vector<ExpertWeights> ex{ExpertWeights::random(c.h, c.f, rng)};
  Matrix x = Matrix::gaussian(7, c.h, rng);
  auto out = moe_layer_forward(x, st, ex, c);
  for (std::size_t t = 0; t < 7; ++t) EXPECT_EQ(out.route.probs(t, 0), 1.0);
  EXPECT_LE(max_abs_diff(out.y, expert_oracle(ex[0], x)), 1e-13);
}

TEST(Moe, ZeroExpertZeroesExactlyItsRows) {
  std::mt19937_64 rng(18);
  auto c = toy();
  c.E = 2;
  auto st = RouterState::random(c.h, c.D, 2, rng);
  std::vector<ExpertWeights> ex{ExpertWeights::random(c.h, c.f, rng), ExpertWeights::random(c.h, c.f, rng)};
  ex[1].fc2 = Matrix(ex[1].fc2.rows(), ex[1].fc2.cols());
  Matrix x = Matrix::gaussian(16, c.h, rng);
  auto out = moe_layer_forward(x, st, ex, c);
  std::size_t zero_rows = 0;
  for (std::size_t t = 0; t < 16; ++t) {
    bool all_zero = true;
    for (double v : out.y.row(t)) all_zero = all_zero && v == 0.0;
    EXPECT_EQ(all_zero, out.route.chosen[t][0] == 1);
    zero_rows += all_zero;
  }
  EXPECT_GT(zero_rows, 0u);
}

TEST(Moe, MatchesDenseOracle) {
  std::mt19937_64 rng(19);
  for (std::size_t k : {1u, 2u}) {
    auto c = toy();
    c.k = k;
    auto st = RouterState::random(c.h, c.D, c.E, rng);
    std::vector<ExpertWeights> ex;
    for (std::size_t e = 0; e < c.E; ++e) ex.push_back(ExpertWeights::random(c.h, c.f, rng));
    Matrix x = Matrix::gaussian(16, c.h, rng);
    auto out = moe_layer_forward(x, st, ex, c);
    EXPECT_LE(max_abs_diff(out.y, moe_dense_oracle(x, ex, out.route)), 1e-13);
  }
}

TEST(Moe, DispatchIsAPermutation) {
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<std::size_t> pick(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::size_t>> chosen(30);
    for (auto& c : chosen) {
      c = {pick(rng), pick(rng)};
      if (c[0] == c[1]) c[1] = (c[1] + 1) % 6;
    }
    auto d = make_dispatch(chosen, 6);
    std::multiset<std::pair<std::size_t, std::size_t>> got(d.order.begin(), d.order.end()), want;
    for (std::size_t t = 0; t < 30; ++t)
      for (std::size_t j = 0; j < 2; ++j) want.insert({t, j});
    EXPECT_EQ(got, want);
    for (std::size_t e = 0; e < 6; ++e)
      for (std::size_t i = d.offsets[e]; i < d.offsets[e + 1]; ++i) EXPECT_EQ(chosen[d.order[i].first][d.order[i].second], e);
  }
  EXPECT_THROW(make_dispatch({{7}}, 6), ShapeError);
}

TEST(Moe, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto c = toy();
  c.k = 2;
  auto st = RouterState::random(c.h, c.D, c.E, rng, 0.4);
  Matrix x = Matrix::gaussian(6, c.h, rng);
  st.prev_r = Matrix::gaussian(6, c.D, rng);
  std::vector<ExpertWeights> ex;
  for (std::size_t e = 0; e < c.E; ++e) ex.push_back(ExpertWeights::random(c.h, c.f, rng));
  const Matrix probe = Matrix::gaussian(6, c.h, rng);
  const auto fwd = moe_layer_forward(x, st, ex, c);
  const auto g = moe_layer_backward(x, st, ex, fwd, probe);

  // Keep routing fixed while probing so the loss is smooth.
  auto loss = [&](const Matrix& xx, const RouterState& rs, const std::vector<ExpertWeights>& ee) {
    auto o = moe_layer_forward(xx, rs, ee, c);
    if (o.route.chosen != fwd.route.chosen) throw NumericError("routing flipped under perturbation");
    return dot(o.y, probe);
  };
  const double h = 1e-6, tol = 1e-5;
  EXPECT_LE(max_rel_error(g.dx, finite_diff_grad([&](const Matrix& m) { return loss(m, st, ex); }, x, h)), tol);
  auto router_fd = [&](Matrix RouterState::*field) {
    return finite_diff_grad([&](const Matrix& m) { auto s = st; s.*field = m; return loss(x, s, ex); }, st.*field, h);
  };
  EXPECT_LE(max_rel_error(g.router.dW_down, router_fd(&RouterState::W_down)), tol);
  EXPECT_LE(max_rel_error(g.router.dmlp1, router_fd(&RouterState::mlp1)), tol);
  EXPECT_LE(max_rel_error(g.router.dmlp2, router_fd(&RouterState::mlp2)), tol);
  EXPECT_LE(max_rel_error(g.router.dlogits_w, router_fd(&RouterState::logits_w)), tol);
  {
    auto sp = st, sm = st;
    sp.gamma += h;
    sm.gamma -= h;
    EXPECT_NEAR(g.router.dgamma, (loss(x, sp, ex) - loss(x, sm, ex)) / (2 * h), tol);
  }
  for (std::size_t e = 0; e < c.E; ++e) {
    auto fd1 = finite_diff_grad([&](const Matrix& m) { auto w = ex; w[e].fc1 = m; return loss(x, st, w); }, ex[e].fc1, h);
    auto fd2 = finite_diff_grad([&](const Matrix& m) { auto w = ex; w[e].fc2 = m; return loss(x, st, w); }, ex[e].fc2, h);
    EXPECT_LE(max_rel_error(g.experts[e].dfc1, fd1), tol) << "expert " << e;
    EXPECT_LE(max_rel_error(g.experts[e].dfc2, fd2), tol) << "expert " << e;
  }
}
