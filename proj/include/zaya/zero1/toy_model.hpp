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

// Small regression net used to exercise the optimizer end to end:
//   P = (tanh(X W1) * gain) W2,   loss = 1/(2n) * sum (P - Y)^2
// W1 and W2 train with Muon, the gain vector with AdamW.

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "zaya/muon/optimizer.hpp"
#include "zaya/numcore/matrix.hpp"

namespace zaya::zero1 {

struct ToyDims {
  std::size_t batch = 8;
  std::size_t d_in = 3;
  std::size_t d_hidden = 4;
  std::size_t d_out = 3;
};

class ToyModel {
 public:
  explicit ToyModel(std::uint64_t seed = 0, ToyDims dims = {}) : dims_(dims) {
    if (dims.batch == 0 || dims.d_in == 0 || dims.d_hidden == 0 || dims.d_out == 0)
      throw ConfigError("toy model: all dimensions must be >= 1");
    std::mt19937_64 rng(seed);
    x_ = Matrix::gaussian(dims.batch, dims.d_in, rng);
    y_ = Matrix::gaussian(dims.batch, dims.d_out, rng);
    Matrix w1 = Matrix::gaussian(dims.d_in, dims.d_hidden, rng, 1.0 / std::sqrt(double(dims.d_in)));
    Matrix gain(1, dims.d_hidden, 1.0);
    Matrix w2 = Matrix::gaussian(dims.d_hidden, dims.d_out, rng, 1.0 / std::sqrt(double(dims.d_hidden)));
    init_ = {std::move(w1), std::move(gain), std::move(w2)};
  }

  std::vector<muon::ParamSpec> specs() const {
    return {muon::ParamSpec::mat("w1", dims_.d_in, dims_.d_hidden), muon::ParamSpec::vec("gain", dims_.d_hidden),
            muon::ParamSpec::mat("w2", dims_.d_hidden, dims_.d_out)};
  }

  const std::vector<Matrix>& initial_weights() const noexcept { return init_; }
  const ToyDims& dims() const noexcept { return dims_; }

  double loss(const std::vector<Matrix>& w) const { return forward(w).loss; }

  /// Loss and full-batch gradients at `w`.
  std::pair<double, std::vector<Matrix>> loss_and_grads(const std::vector<Matrix>& w) const {
    const Fwd f = forward(w);
    const double n = static_cast<double>(dims_.batch);
    Matrix dp = f.p - y_;
    dp *= 1.0 / n;
    Matrix dw2 = gemm(f.h, dp, true, false);
    Matrix dh = gemm(dp, w[2], false, true);
    Matrix dgain(1, dims_.d_hidden);
    Matrix dz(dims_.batch, dims_.d_hidden);
    for (std::size_t i = 0; i < dims_.batch; ++i)
      for (std::size_t j = 0; j < dims_.d_hidden; ++j) {
        const double a = f.a(i, j);
        dgain(0, j) += dh(i, j) * a;
        dz(i, j) = dh(i, j) * w[1](0, j) * (1.0 - a * a);
      }
    Matrix dw1 = gemm(x_, dz, true, false);
    return {f.loss, {std::move(dw1), std::move(dgain), std::move(dw2)}};
  }

 private:
  struct Fwd {
    Matrix a, h, p;
    double loss = 0;
  };

  Fwd forward(const std::vector<Matrix>& w) const {
    if (w.size() != 3) throw ShapeError("toy model: expected 3 parameter tensors");
    Fwd f;
    f.a = gemm(x_, w[0]);
    for (auto& v : f.a.flat()) v = std::tanh(v);
    f.h = f.a;
    if (w[1].rows() != 1 || w[1].cols() != dims_.d_hidden) throw ShapeError("toy model: gain has the wrong shape");
    for (std::size_t i = 0; i < dims_.batch; ++i)
      for (std::size_t j = 0; j < dims_.d_hidden; ++j) f.h(i, j) *= w[1](0, j);
    f.p = gemm(f.h, w[2]);
    double s = 0;
    for (std::size_t i = 0; i < f.p.size(); ++i) {
      const double d = f.p.flat()[i] - y_.flat()[i];
      s += d * d;
    }
    f.loss = s / (2.0 * static_cast<double>(dims_.batch));
    return f;
  }

  ToyDims dims_;
  Matrix x_, y_;
  std::vector<Matrix> init_;
};

}  // namespace zaya::zero1
