/* Copyright 2026 The modfuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "modfuse/autograd.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include "test_util.hpp"

namespace modfuse::ag {
namespace {

using testing::check_gradients;
using testing::random_matrix;

// Reduces any matrix to a scalar through a fixed random projection so that
// every output entry carries a distinct upstream gradient.
Var<double> Project(const Var<double>& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = constant(random_matrix<double>(x->cols(), 1, rng));
  auto col = matmul(x, w);
  auto ones = constant(Matrix<double>(1, x->rows(), 1.0));
  return matmul(ones, col);
}

constexpr double kTol = 1e-6;

TEST(AutogradTest, ElementwiseOps) {
  std::mt19937_64 rng(1);
  auto a = leaf(random_matrix<double>(3, 4, rng));
  auto b = leaf(random_matrix<double>(3, 4, rng));
  auto r = check_gradients({{"a", a}, {"b", b}}, [&] {
    return Project(relu(add(scale(a, 1.5), b)), 7);
  });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, ReluPropagatesNaN) {
  Matrix<double> m(1, 3, std::vector<double>{-1.0, std::nan(""), 2.0});
  auto y = relu(constant(m));
  EXPECT_EQ(y->value(0, 0), 0.0);
  EXPECT_TRUE(std::isnan(y->value(0, 1)));
  EXPECT_EQ(y->value(0, 2), 2.0);
}

TEST(AutogradTest, LinearAndMatmul) {
  std::mt19937_64 rng(2);
  auto x = leaf(random_matrix<double>(5, 3, rng));
  auto w = leaf(random_matrix<double>(3, 4, rng));
  auto bias = leaf(random_matrix<double>(1, 4, rng));
  auto m = leaf(random_matrix<double>(4, 2, rng));
  auto r = check_gradients({{"x", x}, {"w", w}, {"b", bias}, {"m", m}}, [&] {
    return Project(matmul(linear(x, w, bias), m), 3);
  });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, LayerNorm) {
  std::mt19937_64 rng(3);
  auto x = leaf(random_matrix<double>(4, 6, rng));
  auto gamma = leaf(random_matrix<double>(1, 6, rng, 0.5, 1.5));
  auto beta = leaf(random_matrix<double>(1, 6, rng));
  auto r = check_gradients({{"x", x}, {"gamma", gamma}, {"beta", beta}}, [&] {
    return Project(layer_norm(x, gamma, beta), 4);
  });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, LayerNormNormalizesRows) {
  std::mt19937_64 rng(4);
  auto x = constant(random_matrix<double>(3, 8, rng, -5, 5));
  auto y = layer_norm(x, constant(Matrix<double>(1, 8, 1.0)),
                      constant(Matrix<double>(1, 8, 0.0)));
  for (int i = 0; i < 3; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 8; ++j) mean += y->value(i, j) / 8;
    for (int j = 0; j < 8; ++j) var += (y->value(i, j) - mean) * (y->value(i, j) - mean) / 8;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(AutogradTest, StructuralOps) {
  std::mt19937_64 rng(5);
  auto a = leaf(random_matrix<double>(2, 4, rng));
  auto b = leaf(random_matrix<double>(3, 4, rng));
  auto off = leaf(random_matrix<double>(3, 2, rng));
  auto r = check_gradients({{"a", a}, {"b", b}, {"off", off}}, [&] {
    auto cat = concat_rows<double>({a, b});
    auto mid = slice_rows(cat, 1, 4);
    return Project(add_leading_columns(mid, off), 9);
  });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, SinusoidLayoutAndGradient) {
  const std::vector<double> freqs = {0.5, 2.0};
  auto zero = constant(Matrix<double>(1, 2, 0.0));
  auto s = sinusoid(zero, freqs);
  ASSERT_EQ(s->cols(), 8);
  // [sin(w x) | cos(w x) | sin(w y) | cos(w y)]
  for (int f = 0; f < 2; ++f) {
    EXPECT_EQ(s->value(0, f), 0.0);
    EXPECT_EQ(s->value(0, 2 + f), 1.0);
    EXPECT_EQ(s->value(0, 4 + f), 0.0);
    EXPECT_EQ(s->value(0, 6 + f), 1.0);
  }
  std::mt19937_64 rng(6);
  auto c = leaf(random_matrix<double>(3, 2, rng, -4, 4));
  auto r = check_gradients({{"c", c}}, [&] { return Project(sinusoid(c, freqs), 2); });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, WeightedSumSkipsZeroWeights) {
  auto a = leaf(Matrix<double>(1, 1, 2.0));
  auto b = leaf(Matrix<double>(1, 1, 3.0));
  auto s = weighted_sum<double>({0.5, 0.0}, {a, b});
  EXPECT_EQ(scalar(s), 1.0);
  backward(s);
  EXPECT_EQ(a->grad(0, 0), 0.5);
  EXPECT_FALSE(b->grad.same_shape(b->value) && b->grad(0, 0) != 0.0);
}

TEST(AutogradTest, AttentionWithoutBias) {
  std::mt19937_64 rng(7);
  auto q = leaf(random_matrix<double>(3, 4, rng));
  auto k = leaf(random_matrix<double>(5, 4, rng));
  auto v = leaf(random_matrix<double>(5, 4, rng));
  auto r = check_gradients({{"q", q}, {"k", k}, {"v", v}},
                           [&] { return Project(attention(q, k, v, 2), 5); });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, AttentionWithProximityBias) {
  std::mt19937_64 rng(8);
  auto q = leaf(random_matrix<double>(3, 4, rng));
  auto k = leaf(random_matrix<double>(6, 4, rng));
  auto v = leaf(random_matrix<double>(6, 4, rng));
  ProximityBias<double> bias{leaf(Matrix<double>(1, 1, -0.7)),
                             leaf(Matrix<double>(1, 1, 0.3)),
                             random_matrix<double>(3, 6, rng, 0, 3)};
  auto r = check_gradients(
      {{"q", q}, {"k", k}, {"v", v}, {"alpha", bias.alpha}, {"beta", bias.beta}},
      [&] { return Project(attention(q, k, v, 1, &bias), 6); });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
  // Softmax is invariant to the shared shift, so beta has no gradient.
  EXPECT_NEAR(bias.beta->grad(0, 0), 0.0, 1e-15);
}

TEST(AutogradTest, AttentionProbeRowsAreDistributions) {
  std::mt19937_64 rng(9);
  auto q = constant(random_matrix<double>(2, 6, rng));
  auto k = constant(random_matrix<double>(4, 6, rng));
  AttentionProbe<double> probe;
  attention(q, k, k, 3, static_cast<const ProximityBias<double>*>(nullptr), &probe);
  ASSERT_EQ(probe.weights.size(), 3u);
  for (const auto& w : probe.weights) {
    ASSERT_EQ(w.rows(), 2);
    ASSERT_EQ(w.cols(), 4);
    for (int i = 0; i < 2; ++i) {
      double s = 0;
      for (int j = 0; j < 4; ++j) s += w(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(AutogradTest, AttentionRejectsBadShapes) {
  auto q = constant(Matrix<double>(2, 6));
  auto k = constant(Matrix<double>(3, 6));
  EXPECT_THROW(attention(q, k, k, 4), std::invalid_argument);
  EXPECT_THROW(attention(q, constant(Matrix<double>(0, 6)),
                         constant(Matrix<double>(0, 6)), 2),
               std::invalid_argument);
}

TEST(AutogradTest, FocalLossGradient) {
  std::mt19937_64 rng(10);
  auto logits = leaf(random_matrix<double>(5, 3, rng, -3, 3));
  const std::vector<int> targets = {0, -1, 2, -1, 1};
  auto r = check_gradients({{"logits", logits}}, [&] {
    return focal_loss(logits, targets, 0.25, 2.0, 3.0);
  });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, L1PairsGradient) {
  std::mt19937_64 rng(11);
  auto pred = leaf(random_matrix<double>(4, 4, rng));
  const auto target = random_matrix<double>(2, 4, rng, 2, 3);
  auto r = check_gradients({{"pred", pred}}, [&] {
    return l1_pairs(pred, target, {{0, 1}, {3, 0}});
  });
  EXPECT_LT(r.max_relative_error, kTol) << r.worst_tensor;
}

TEST(AutogradTest, NoGradGuardRecordsNoGraph) {
  auto w = leaf(Matrix<double>(2, 2, 1.0));
  auto x = constant(Matrix<double>(1, 2, 1.0));
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    auto y = matmul(x, w);
    EXPECT_TRUE(y->parents.empty());
    EXPECT_FALSE(y->requires_grad);
  }
  EXPECT_TRUE(grad_enabled());
  auto y = matmul(x, w);
  EXPECT_TRUE(y->requires_grad);
}

TEST(AutogradTest, DetachCutsGradient) {
  auto w = leaf(Matrix<double>(1, 1, 2.0));
  auto y = add(scale(w, 3.0), detach(scale(w, 5.0)));
  backward(y);
  EXPECT_EQ(w->grad(0, 0), 3.0);
}

TEST(AutogradTest, BackwardRequiresScalarRoot) {
  auto w = leaf(Matrix<double>(2, 2, 1.0));
  EXPECT_THROW(backward(w), std::invalid_argument);
}

TEST(AutogradTest, SharedSubgraphAccumulates) {
  auto w = leaf(Matrix<double>(1, 1, 2.0));
  auto h = scale(w, 3.0);
  backward(add(h, h));
  EXPECT_EQ(w->grad(0, 0), 6.0);
}

TEST(ParameterStoreTest, OrderedNamesAndErrors) {
  ParameterStore<float> store;
  store.create("b", Matrix<float>(1, 2));
  store.create("a", Matrix<float>(3, 1));
  EXPECT_THROW(store.create("a", Matrix<float>(1, 1)), std::invalid_argument);
  EXPECT_THROW(store.get("missing"), std::out_of_range);
  EXPECT_EQ(store.total_size(), 5u);
  EXPECT_EQ(store.all().begin()->first, "a");
}

}  // namespace
}  // namespace modfuse::ag
