// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "lmseg/grad_check.hpp"
#include "lmseg/nn.hpp"
#include "lmseg/ops.hpp"

namespace lmseg::ad {
namespace {

using V = Var<double>;
using Tn = Tensor<double>;

Tn random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tn t(r, c);
  for (auto& x : t.data) x = u(rng);
  return t;
}

V leaf(Tn t) { return V::leaf(std::move(t), true); }

// Projects an op output to a scalar with fixed random weights.
V project(const V& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xabcdef);
  return sum_all(mul(y, constant(random_tensor(y.rows(), y.cols(), rng))));
}

void expect_grad_ok(const std::function<V()>& f, std::vector<std::pair<std::string, V>> leaves, const char* what) {
  const GradCheckReport r = grad_check(f, std::move(leaves));
  EXPECT_TRUE(r.pass) << what << " max rel err " << r.max_rel_error;
  EXPECT_GT(r.checked, 0u) << what;
  EXPECT_LT(r.skipped_fraction(), 0.2) << what;
}

std::vector<Index> random_index(std::size_t n, std::size_t groups, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, static_cast<Index>(groups - 1));
  std::vector<Index> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

TEST(DiffEngine, ReluExamples) {
  V x = leaf(Tn(1, 2, {-1.0, 2.0}));
  V y = relu(x);
  EXPECT_EQ(y.value().data, (std::vector<double>{0.0, 2.0}));
  backward(sum_all(y));
  EXPECT_EQ(x.grad().data, (std::vector<double>{0.0, 1.0}));
}

TEST(DiffEngine, ScatterMaxRoutesToArgmax) {
  V x = leaf(Tn(3, 1, {1.0, 5.0, 2.0}));
  V y = scatter_reduce(x, {0, 0, 1}, 2, Reduce::Max);
  EXPECT_EQ(y.value().data, (std::vector<double>{5.0, 2.0}));
  backward(sum_all(mul(y, constant(Tn(2, 1, {1.0, 0.0})))));
  EXPECT_EQ(x.grad().data, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(DiffEngine, ScatterEmptyGroupIsZero) {
  V x = leaf(Tn(2, 1, {3.0, 4.0}));
  for (Reduce m : {Reduce::Sum, Reduce::Mean, Reduce::Max}) {
    V y = scatter_reduce(x, {0, 0}, 2, m);
    EXPECT_EQ(y.value()(1, 0), 0.0);
  }
  EXPECT_EQ(scatter_reduce(x, {0, 0}, 1, Reduce::Mean).value()(0, 0), 3.5);
}

TEST(DiffEngine, GroupSoftmaxSymmetric) {
  V x = leaf(Tn(2, 1, {0.0, 0.0}));
  const V y = group_softmax(x, {0, 0}, 1);
  EXPECT_DOUBLE_EQ(y.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y.value()(1, 0), 0.5);
}

TEST(DiffEngine, ShapeAndIndexErrors) {
  V a = leaf(Tn(2, 3));
  V b = leaf(Tn(2, 2));
  EXPECT_THROW(matmul(a, b), Error);
  EXPECT_THROW(add(a, b), Error);
  try {
    gather_rows(a, {0, 5});
    FAIL() << "expected IndexOutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(DiffEngine, OpsPassGradCheckOverSeeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 5);
    const std::size_t n = dim(rng) + 1, c = dim(rng), k = dim(rng);
    V a = leaf(random_tensor(n, c, rng));
    V b = leaf(random_tensor(n, c, rng));
    V w = leaf(random_tensor(c, k, rng));
    V bias = leaf(random_tensor(1, k, rng));
    V row = leaf(random_tensor(1, c, rng));
    V s = leaf(random_tensor(1, 1, rng));

    expect_grad_ok([&] { return project(matmul(a, w), seed); }, {{"a", a}, {"w", w}}, "matmul");
    expect_grad_ok([&] { return project(affine(a, w, bias), seed); }, {{"a", a}, {"w", w}, {"b", bias}}, "affine");
    expect_grad_ok([&] { return project(add(a, b), seed); }, {{"a", a}, {"b", b}}, "add");
    expect_grad_ok([&] { return project(add(a, row), seed); }, {{"a", a}, {"row", row}}, "add bcast");
    expect_grad_ok([&] { return project(sub(a, b), seed); }, {{"a", a}, {"b", b}}, "sub");
    expect_grad_ok([&] { return project(mul(a, b), seed); }, {{"a", a}, {"b", b}}, "mul");
    expect_grad_ok([&] { return project(mul(a, row), seed); }, {{"a", a}, {"row", row}}, "mul bcast");
    expect_grad_ok([&] { return project(scale(a, 2.5), seed); }, {{"a", a}}, "scale");
    expect_grad_ok([&] { return project(scale_by(a, s), seed); }, {{"a", a}, {"s", s}}, "scale_by");
    expect_grad_ok([&] { return project(relu(a), seed); }, {{"a", a}}, "relu");
    expect_grad_ok([&] { return project(sin(a), seed); }, {{"a", a}}, "sin");
    expect_grad_ok([&] { return project(cos(a), seed); }, {{"a", a}}, "cos");
    expect_grad_ok([&] { return project(exp(a), seed); }, {{"a", a}}, "exp");
    expect_grad_ok([&] { return project(concat_cols<double>({a, b, a}), seed); }, {{"a", a}, {"b", b}}, "concat");
    expect_grad_ok([&] { return mean_all(mul(a, a)); }, {{"a", a}}, "mean_all");

    const auto gidx = random_index(2 * n, n, rng);
    expect_grad_ok([&] { return project(gather_rows(a, gidx), seed); }, {{"a", a}}, "gather");
    const auto sidx = random_index(n, 3, rng);
    expect_grad_ok([&] { return project(scatter_reduce(a, sidx, 3, Reduce::Sum), seed); }, {{"a", a}}, "scatter sum");
    expect_grad_ok([&] { return project(scatter_reduce(a, sidx, 3, Reduce::Mean), seed); }, {{"a", a}}, "scatter mean");
    expect_grad_ok([&] { return project(scatter_reduce(a, sidx, 3, Reduce::Max), seed); }, {{"a", a}}, "scatter max");
    expect_grad_ok([&] { return project(group_softmax(a, sidx, 3), seed); }, {{"a", a}}, "group softmax");

    std::vector<double> wts(2 * n);
    for (auto& x : wts) x = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto widx = random_index(2 * n, n, rng);
    expect_grad_ok([&] { return project(weighted_gather(a, widx, wts, 2), seed); }, {{"a", a}}, "weighted gather");

    expect_grad_ok([&] { return project(std_normalize(a, 1e-5), seed); }, {{"a", a}}, "std_normalize");
    V gamma = leaf(random_tensor(1, c, rng, 0.5, 1.5));
    V beta = leaf(random_tensor(1, c, rng));
    expect_grad_ok(
        [&] {
          NormStats<double> st{Tn(1, c, 0.0), Tn(1, c, 1.0)};
          return project(batch_norm(a, gamma, beta, st, true), seed);
        },
        {{"a", a}, {"gamma", gamma}, {"beta", beta}}, "batch_norm train");
    const Tn running_mean = random_tensor(1, c, rng);
    expect_grad_ok(
        [&] {
          NormStats<double> st{running_mean, Tn(1, c, 2.0)};
          return project(batch_norm(a, gamma, beta, st, false), seed);
        },
        {{"a", a}, {"gamma", gamma}, {"beta", beta}}, "batch_norm eval");
    if (c > 1) {
      expect_grad_ok([&] { return project(layer_norm(a, gamma, beta), seed); }, {{"a", a}, {"gamma", gamma}, {"beta", beta}},
                     "layer_norm");
    }
    expect_grad_ok([&] { return project(dropout(a, 0.5, seed, true), seed); }, {{"a", a}}, "dropout");

    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(std::uniform_int_distribution<int>(0, static_cast<int>(k) - 1)(rng));
    std::vector<double> cw(k);
    for (auto& x : cw) x = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
    V logits = leaf(random_tensor(n, k, rng, -3, 3));
    expect_grad_ok([&] { return smoothed_weighted_ce<double>(logits, labels, cw, 0.1); }, {{"logits", logits}}, "ce");
  }
}

TEST(DiffEngine, ScatterGatherMatchIncidenceMatmul) {
  std::mt19937_64 rng(12);
  const std::size_t n = 7, groups = 3, c = 4;
  const Tn x = random_tensor(n, c, rng);
  const auto idx = random_index(n, groups, rng);
  Tn inc(groups, n);
  for (std::size_t r = 0; r < n; ++r) inc(idx[r], r) = 1.0;
  const Tn summed = scatter_reduce(constant(x), idx, groups, Reduce::Sum).value();
  const Tn dense = matmul(constant(inc), constant(x)).value();
  for (std::size_t i = 0; i < summed.numel(); ++i) EXPECT_NEAR(summed.data[i], dense.data[i], 1e-12);
  // Gather is the transposed incidence.
  Tn inc_t(n, groups);
  for (std::size_t r = 0; r < n; ++r) inc_t(r, idx[r]) = 1.0;
  const Tn back = gather_rows(constant(summed), idx).value();
  const Tn back_dense = matmul(constant(inc_t), constant(summed)).value();
  for (std::size_t i = 0; i < back.numel(); ++i) EXPECT_NEAR(back.data[i], back_dense.data[i], 1e-12);
}

TEST(DiffEngine, DropoutExtremes) {
  std::mt19937_64 rng(3);
  V a = leaf(random_tensor(4, 3, rng));
  const V same = dropout(a, 0.0, 7, true);
  EXPECT_EQ(same.value().data, a.value().data);
  EXPECT_EQ(dropout(a, 0.5, 7, false).value().data, a.value().data);
  V zero = dropout(a, 1.0, 7, true);
  for (double v : zero.value().data) EXPECT_EQ(v, 0.0);
  backward(sum_all(zero));
  for (double g : a.grad().data) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(dropout(a, 0.3, 9, true).value().data, dropout(a, 0.3, 9, true).value().data);
}

TEST(DiffEngine, NonFiniteLossRaises) {
  V z = leaf(Tn(1, 2, {std::nan(""), 0.0}));
  const std::vector<int> lab = {0};
  const std::vector<double> w = {1.0, 1.0};
  try {
    smoothed_weighted_ce<double>(z, lab, w, 0.0);
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
  }
}

TEST(DiffEngine, GradCheckScalarSquare) {
  V x = leaf(Tn::scalar(3.0));
  const auto r = grad_check([&] { return mul(x, x); }, {{"x", x}});
  EXPECT_NEAR(x.grad().data[0], 6.0, 1e-12);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(DiffEngine, DetachedInputHasZeroGradient) {
  V x = leaf(Tn::scalar(3.0));
  V unused = leaf(Tn(2, 2, 1.0));
  const auto r = grad_check([&] { return mul(x, x); }, {{"x", x}, {"unused", unused}});
  EXPECT_TRUE(r.pass);
  ASSERT_EQ(r.leaves.size(), 2u);
  EXPECT_EQ(r.leaves[1].max_rel_error, 0.0);
  for (double g : unused.grad().data) EXPECT_EQ(g, 0.0);
}

TEST(DiffEngine, GradCheckFlagsWrongGradient) {
  // x * const(x) evaluates x^2 but backpropagates only x.
  V x = leaf(Tn::scalar(3.0));
  const auto r = grad_check([&] { return mul(x, constant(x.value())); }, {{"x", x}});
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.max_rel_error, 0.5, 1e-6);
  // A small but real gradient error is still resolved above the rounding floor.
  V y = leaf(Tn::scalar(1e-3));
  const auto s = grad_check([&] { return add(scale(y, 1e-3), constant(Tn::scalar(1e-3 * y.value().data[0] * 1.01))); },
                            {{"y", y}});
  EXPECT_FALSE(s.pass);
}

TEST(DiffEngine, GradCheckRejectsNonFinite) {
  V x = leaf(Tn::scalar(-1.0));
  EXPECT_THROW(grad_check([&] { return constant(Tn::scalar(std::sqrt(x.value().data[0]))); }, {{"x", x}}), Error);
}

// Straight-line reference for affine -> training batch norm -> relu layers.
std::vector<std::vector<double>> reference_layer(const std::vector<std::vector<double>>& x, const Tn& w, const Tn& b,
                                                 bool act) {
  const std::size_t n = x.size(), cin = w.rows(), cout = w.cols();
  std::vector<std::vector<double>> z(n, std::vector<double>(cout, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < cout; ++o) {
      double acc = b(0, o);
      for (std::size_t j = 0; j < cin; ++j) acc += x[i][j] * w(j, o);
      z[i][o] = acc;
    }
  }
  for (std::size_t o = 0; o < cout; ++o) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mean += z[i][o];
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) var += (z[i][o] - mean) * (z[i][o] - mean);
    var /= n;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (z[i][o] - mean) / std::sqrt(var + 1e-5);
      z[i][o] = act ? std::max(h, 0.0) : h;
    }
  }
  return z;
}

std::vector<std::vector<double>> rows_of(const Tn& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t(i, j);
  }
  return out;
}

TEST(DiffEngine, MlpMatchesReference) {
  std::mt19937_64 rng(5);
  nn::ParamStore<double> store(9);
  nn::MLP<double> mlp(store, "m", {6, 8, 4}, nn::NormKind::Batch);
  const Tn x = random_tensor(5, 6, rng);
  const Tn y = mlp(constant(x), {true, 0}).value();
  auto h = reference_layer(rows_of(x), mlp.linears()[0].weight().var.value(), mlp.linears()[0].bias().var.value(), true);
  h = reference_layer(h, mlp.linears()[1].weight().var.value(), mlp.linears()[1].bias().var.value(), true);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y(i, j), h[i][j], 1e-12);
  }
}

TEST(DiffEngine, MlpZeroWeightsAndIdentity) {
  std::mt19937_64 rng(6);
  nn::ParamStore<double> store;
  nn::MLP<double> zero(store, "z", {3, 3}, nn::NormKind::None);
  zero.linears()[0].weight().var.mutable_value() = Tn(3, 3, 0.0);
  zero.linears()[0].bias().var.mutable_value() = Tn(1, 3, 0.0);
  const Tn out = zero(constant(random_tensor(4, 3, rng)), {}).value();
  for (double v : out.data) EXPECT_EQ(v, 0.0);

  nn::MLP<double> ident(store, "i", {3, 3}, nn::NormKind::None);
  Tn eye(3, 3, 0.0);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  ident.linears()[0].weight().var.mutable_value() = eye;
  ident.linears()[0].bias().var.mutable_value() = Tn(1, 3, 0.0);
  const Tn x = random_tensor(4, 3, rng, 0.0, 2.0);
  EXPECT_EQ(ident(constant(x), {}).value().data, x.data);
}

TEST(DiffEngine, ResMlpSkipCases) {
  std::mt19937_64 rng(7);
  nn::ParamStore<double> store(3);
  nn::ResMLP<double> same(store, "s", 4, 4, nn::NormKind::Batch);
  same.fc2().weight().var.mutable_value() = Tn(4, 4, 0.0);
  same.fc2().bias().var.mutable_value() = Tn(1, 4, 0.0);
  const Tn x = random_tensor(6, 4, rng);
  const Tn y = same(constant(x), {true, 0}).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data[i], x.data[i], 1e-12);

  nn::ResMLP<double> wide(store, "w", 32, 64, nn::NormKind::Batch);
  wide.fc2().weight().var.mutable_value() = Tn(64, 64, 0.0);
  wide.fc2().bias().var.mutable_value() = Tn(1, 64, 0.0);
  const Tn xw = random_tensor(5, 32, rng);
  const Tn yw = wide(constant(xw), {true, 0}).value();
  ASSERT_NE(wide.projection(), nullptr);
  const Tn px = (*wide.projection())(constant(xw)).value();
  for (std::size_t i = 0; i < yw.numel(); ++i) EXPECT_NEAR(yw.data[i], px.data[i], 1e-12);
}

TEST(DiffEngine, ResMlpMatchesReference) {
  std::mt19937_64 rng(8);
  nn::ParamStore<double> store(4);
  nn::ResMLP<double> block(store, "r", 5, 5, nn::NormKind::Batch);
  const Tn x = random_tensor(7, 5, rng);
  const Tn y = block(constant(x), {true, 0}).value();
  auto h = reference_layer(rows_of(x), block.fc1().weight().var.value(), block.fc1().bias().var.value(), true);
  h = reference_layer(h, block.fc2().weight().var.value(), block.fc2().bias().var.value(), false);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(y(i, j), x(i, j) + h[i][j], 1e-12);
  }
}

TEST(DiffEngine, BatchNormRunningStats) {
  NormStats<double> st{Tn(1, 1, 0.0), Tn(1, 1, 1.0)};
  V x = leaf(Tn(4, 1, {1.0, 2.0, 3.0, 4.0}));
  V g = leaf(Tn(1, 1, 1.0)), b = leaf(Tn(1, 1, 0.0));
  batch_norm(x, g, b, st, true);
  EXPECT_NEAR(st.mean.data[0], 0.25, 1e-12);
  EXPECT_NEAR(st.var.data[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
  const Tn e = batch_norm(x, g, b, st, false).value();
  EXPECT_NEAR(e(0, 0), (1.0 - 0.25) / std::sqrt(st.var.data[0] + 1e-5), 1e-12);
}

}  // namespace
}  // namespace lmseg::ad
