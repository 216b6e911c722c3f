// Copyright 2026 The fvclab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "fvc/autodiff.hpp"
#include "fvc/errors.hpp"
#include "fvc/kernels.hpp"
#include "fvc/tensor.hpp"

namespace fvc {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

TEST(Tensor, ShapeInvariants) {
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{1, 2, 3, 4}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1.0, 2.0}), ShapeError);
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({24}).size(), 24u);
}

TEST(Tensor, GradBufferLifecycle) {
  Tensor t({2, 2});
  EXPECT_FALSE(t.has_grad());
  t.set_requires_grad(true);
  t.zero_grad();
  ASSERT_TRUE(t.has_grad());
  t.grad()[0] = 3.0;
  t.set_requires_grad(false);
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, ChecksumDetectsSingleBitChange) {
  Tensor t = random_tensor({4, 4}, 1);
  const auto before = checksum(t.values());
  t[5] = std::nextafter(t[5], 2.0);
  EXPECT_NE(before, checksum(t.values()));
}

TEST(Autodiff, ForwardValues) {
  ad::Graph g;
  ad::Var a = g.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
  ad::Var b = g.constant(Tensor::matrix({{5.0, 6.0}, {7.0, 8.0}}));
  const Tensor& c = ad::matmul(a, b).value();
  EXPECT_DOUBLE_EQ(c.at(0, 0), 19.0);
  EXPECT_DOUBLE_EQ(c.at(1, 1), 50.0);
  const Tensor& s = ad::softmax(a).value();
  EXPECT_NEAR(s.at(0, 0) + s.at(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(s.at(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_DOUBLE_EQ(ad::mean(a).value()[0], 2.5);
  const Tensor& mr = ad::mean_rows(a).value();
  EXPECT_EQ(mr.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(mr[1], 3.0);
}

TEST(Autodiff, LayerNormUsesBiasedVariance) {
  ad::Graph g;
  ad::Var x = g.constant(Tensor::matrix({{1.0, 3.0}}));
  ad::Var gamma = g.constant(Tensor::vector({1.0, 1.0}));
  ad::Var beta = g.constant(Tensor::vector({0.0, 0.0}));
  const Tensor& y = ad::layer_norm(x, gamma, beta).value();
  const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -expected, 1e-15);
  EXPECT_NEAR(y[1], expected, 1e-15);
  EXPECT_THROW(ad::layer_norm(x, gamma, beta, 0.0), ConfigError);
}

TEST(Autodiff, ShapeErrors) {
  ad::Graph g;
  ad::Var a = g.constant(Tensor({2, 3}));
  ad::Var b = g.constant(Tensor({3, 2}));
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::matmul(a, a), ShapeError);
  EXPECT_THROW(ad::conv1d(a, g.constant(Tensor({2, 3, 1}))), ConfigError);
  EXPECT_THROW(ad::slice_rows(a, 1, 2), ShapeError);
}

TEST(Autodiff, BackwardNeedsScalar) {
  ad::Graph g;
  ad::Var x = g.input(Tensor({2, 2}, 1.0));
  EXPECT_THROW(g.backward(ad::tanh(x)), ContractError);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  // d/dx sum(x * x + x) = 2x + 1
  ad::Graph g;
  ad::Var x = g.input(Tensor::vector({0.5, -2.0, 3.0}));
  g.backward(ad::sum(ad::add(ad::mul(x, x), x)));
  const auto gx = g.grad(x);
  EXPECT_DOUBLE_EQ(gx[0], 2.0);
  EXPECT_DOUBLE_EQ(gx[1], -3.0);
  EXPECT_DOUBLE_EQ(gx[2], 7.0);
}

TEST(Autodiff, ParametersAccumulateAcrossGraphs) {
  Tensor w = Tensor::vector({1.0, 2.0});
  w.set_requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    ad::Graph g;
    ad::Var p = g.parameter(w);
    EXPECT_EQ(p.id(), g.parameter(w).id());
    g.backward(ad::sum(ad::scale(p, 3.0)));
  }
  EXPECT_DOUBLE_EQ(w.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 6.0);
}

TEST(Autodiff, FrozenParameterGetsNoGradient) {
  Tensor w = Tensor::vector({1.0, 2.0});
  ad::Graph g;
  ad::Var x = g.input(Tensor::vector({3.0, 4.0}));
  g.backward(ad::sum(ad::mul(g.parameter(w), x)));
  EXPECT_FALSE(w.has_grad());
  EXPECT_DOUBLE_EQ(g.grad(x)[1], 2.0);
}

TEST(Autodiff, GradientReversalForwardIsBitExact) {
  const Tensor x = random_tensor({5, 7}, 3);
  for (double lambda : {0.0, 0.5, 1.0, 3.0}) {
    ad::Graph g;
    const Tensor& y = ad::gradient_reversal(g.constant(x), lambda).value();
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(std::memcmp(x.data() + i, y.data() + i, sizeof(double)), 0);
  }
  ad::Graph g;
  EXPECT_THROW(ad::gradient_reversal(g.constant(x), -1.0), ConfigError);
}

TEST(Autodiff, GradientReversalScalesUpstreamGradient) {
  const Tensor x = random_tensor({3, 4}, 4);
  const Tensor w = random_tensor({4, 2}, 5);
  auto grad_of = [&](bool reverse, double lambda) {
    ad::Graph g;
    ad::Var xv = g.input(x);
    ad::Var h = reverse ? ad::gradient_reversal(xv, lambda) : xv;
    g.backward(ad::sum(ad::tanh(ad::matmul(h, g.constant(w)))));
    auto gr = g.grad(xv);
    return std::vector<double>(gr.begin(), gr.end());
  };
  const auto plain = grad_of(false, 0.0);
  for (double lambda : {0.0, 0.5, 1.0}) {
    const auto rev = grad_of(true, lambda);
    for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_NEAR(rev[i], -lambda * plain[i], 1e-12);
  }
}

TEST(Autodiff, DropoutIsIdentityInEvalAndSeededInTraining) {
  const Tensor x = random_tensor({6, 6}, 6);
  ad::Graph eval;
  const Tensor& y = ad::dropout(eval.constant(x), 0.5).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);

  auto run = [&](std::uint64_t seed) {
    ad::Graph g(true, seed);
    return ad::dropout(g.constant(x), 0.5).value();
  };
  const Tensor a = run(9), b = run(9), c = run(10);
  std::size_t zeros = 0, differ = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    if (a[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(a[i], 2.0 * x[i]);
    }
    if (a[i] != c[i]) ++differ;
  }
  EXPECT_GT(zeros, 0u);
  EXPECT_LT(zeros, x.size());
  EXPECT_GT(differ, 0u);
}

TEST(Autodiff, MaskRowsZeroesRowsAndTheirGradients) {
  ad::Graph g;
  ad::Var x = g.input(random_tensor({3, 2}, 7));
  const std::vector<double> mask = {1.0, 0.0, 1.0};
  ad::Var y = ad::mask_rows(x, mask);
  EXPECT_EQ(y.value().at(1, 0), 0.0);
  g.backward(ad::sum(y));
  EXPECT_EQ(g.grad(x)[2], 0.0);
  EXPECT_EQ(g.grad(x)[4], 1.0);
}

TEST(Autodiff, OpRegistryHasEveryOpOnce) {
  const auto ops = ad::differentiable_ops();
  EXPECT_EQ(ops.size(), 28u);
  for (std::size_t i = 0; i < ops.size(); ++i)
    for (std::size_t j = i + 1; j < ops.size(); ++j) EXPECT_NE(ops[i], ops[j]);
}

// ------------------------------------------------------------------------------------- kernels

class KernelThreads : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = kernels::num_threads();
    kernels::set_num_threads(GetParam());
  }
  void TearDown() override { kernels::set_num_threads(saved_); }
  int saved_ = 1;
};

TEST_P(KernelThreads, GemmMatchesReferenceBitwise) {
  for (int trans = 0; trans < 4; ++trans) {
    const bool ta = trans & 1, tb = trans & 2;
    const std::size_t m = 67, n = 45, k = 129;
    const Tensor a = random_tensor({m * k}, 10 + trans), b = random_tensor({k * n}, 20 + trans);
    Tensor c1 = random_tensor({m * n}, 30), c2 = c1;
    kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), c1.data(), true);
    kernels::reference::gemm(ta, tb, m, n, k, a.data(), b.data(), c2.data(), true);
    EXPECT_EQ(checksum(c1.values()), checksum(c2.values()));
  }
}

TEST_P(KernelThreads, ConvMatchesReferenceBitwise) {
  const std::size_t T = 150, ci = 24, co = 32, taps = 9;
  const Tensor x = random_tensor({T * ci}, 40), w = random_tensor({taps * ci * co}, 41);
  const Tensor dy = random_tensor({T * co}, 42);
  Tensor y1({T * co}), y2({T * co}), dx1({T * ci}), dx2({T * ci}), dw1({taps * ci * co}), dw2({taps * ci * co});
  kernels::conv1d_forward(T, ci, co, taps, x.data(), w.data(), y1.data());
  kernels::reference::conv1d_forward(T, ci, co, taps, x.data(), w.data(), y2.data());
  kernels::conv1d_backward_input(T, ci, co, taps, dy.data(), w.data(), dx1.data());
  kernels::reference::conv1d_backward_input(T, ci, co, taps, dy.data(), w.data(), dx2.data());
  kernels::conv1d_backward_weight(T, ci, co, taps, x.data(), dy.data(), dw1.data());
  kernels::reference::conv1d_backward_weight(T, ci, co, taps, x.data(), dy.data(), dw2.data());
  EXPECT_EQ(checksum(y1.values()), checksum(y2.values()));
  EXPECT_EQ(checksum(dx1.values()), checksum(dx2.values()));
  EXPECT_EQ(checksum(dw1.values()), checksum(dw2.values()));
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelThreads, ::testing::Values(1, 2, 4));

TEST(Kernels, ConvMatchesHandConvolution) {
  // x = [1 2 3], one channel, kernel [a b c] = [0.5 1 -1], same padding.
  const double x[] = {1.0, 2.0, 3.0};
  const double w[] = {0.5, 1.0, -1.0};
  double y[3];
  kernels::reference::conv1d_forward(3, 1, 1, 3, x, w, y);
  EXPECT_DOUBLE_EQ(y[0], 1.0 * 1.0 - 1.0 * 2.0);
  EXPECT_DOUBLE_EQ(y[1], 0.5 * 1.0 + 1.0 * 2.0 - 1.0 * 3.0);
  EXPECT_DOUBLE_EQ(y[2], 0.5 * 2.0 + 1.0 * 3.0);
}

}  // namespace
}  // namespace fvc
