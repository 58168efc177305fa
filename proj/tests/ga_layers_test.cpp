// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lmseg/ga_layers.hpp"
#include "lmseg/grad_check.hpp"

namespace lmseg {
namespace {

using V = ad::Var<double>;
using Tn = ad::Tensor<double>;

Tn random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tn t(r, c);
  for (auto& x : t.data) x = u(rng);
  return t;
}

EdgeList random_edges(std::size_t n_src, std::size_t n_tgt, std::size_t e, std::mt19937_64& rng) {
  EdgeList out;
  for (std::size_t k = 0; k < e; ++k) {
    out.src.push_back(static_cast<Index>(rng() % n_src));
    out.tgt.push_back(static_cast<Index>(rng() % n_tgt));
  }
  return out;
}

std::vector<Vec3> random_positions(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> p(n);
  for (auto& x : p) x = Vec3(u(rng), u(rng), u(rng));
  return p;
}

TEST(GaLayers, RelativeFeaturesIdenticalIsZero) {
  const V x = ad::constant(Tn(4, 3, 0.7));
  std::mt19937_64 rng(1);
  const auto e = random_edges(4, 4, 6, rng);
  const Tn out = relative_features(x, x, e).value();
  for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(GaLayers, RelativeFeaturesSingleEdgeFinite) {
  const V x = ad::constant(Tn(2, 2, {0.0, 0.0, 2.0, 0.0}));
  EdgeList e;
  e.src = {1};
  e.tgt = {0};
  const Tn r = relative_features(x, x, e).value();
  EXPECT_NEAR(r(0, 0), 2.0 / 1e-5, 1e-6);
  EXPECT_EQ(r(0, 1), 0.0);
  EXPECT_TRUE(std::isfinite(r(0, 0)));
}

TEST(GaLayers, RelativeFeaturesMatchOracle) {
  std::mt19937_64 rng(2);
  const Tn xs = random_tensor(10, 4, rng), xt = random_tensor(6, 4, rng);
  const auto e = random_edges(10, 6, 30, rng);
  const Tn got = relative_features(ad::constant(xs), ad::constant(xt), e).value();
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> d(30);
    for (std::size_t k = 0; k < 30; ++k) d[k] = xs(e.src[k], c) - xt(e.tgt[k], c);
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / 30.0;
    double var = 0;
    for (double v : d) var += (v - mean) * (v - mean);
    const double sigma = std::sqrt(var / 30.0);
    for (std::size_t k = 0; k < 30; ++k) EXPECT_NEAR(got(k, c), d[k] / (sigma + 1e-5), 1e-12);
  }
}

TEST(GaLayers, PositionalEmbeddingExamples) {
  PEConfig cfg;
  cfg.dim = 12;
  const Tn zero = positional_embedding(ad::constant(Tn(1, 3, 0.0)), cfg).value();
  for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(zero(0, j), j % 2 == 0 ? 0.0 : 1.0);
  const double x = 0.0123;
  const Tn one = positional_embedding(ad::constant(Tn(1, 3, {x, 0.5, -0.2})), cfg).value();
  EXPECT_NEAR(one(0, 0), std::sin(100.0 * x), 1e-15);
  EXPECT_NEAR(one(0, 1), std::cos(100.0 * x), 1e-15);
  // Second block starts after the 2 pairs of block 0 and embeds the y component.
  const PELayout layout(12);
  EXPECT_EQ(layout.pairs[0], 2u);
  EXPECT_EQ(layout.offset[1], 4u);
  EXPECT_NEAR(one(0, 4), std::sin(100.0 * 0.5), 1e-15);
  EXPECT_NEAR(one(0, 2), std::sin(100.0 * x / std::pow(1000.0, 2.0 / 4.0)), 1e-15);
  EXPECT_THROW(PELayout(7), Error);
}

TEST(GaLayers, PositionalEmbeddingBounded) {
  std::mt19937_64 rng(3);
  PEConfig cfg;
  cfg.dim = 32;
  const Tn pe = positional_embedding(ad::constant(random_tensor(1000, 3, rng, -2, 2)), cfg).value();
  for (double v : pe.data) EXPECT_LE(std::abs(v), 1.0);
}

TEST(GaLayers, SoftmaxAggregateLimits) {
  const V h = ad::constant(Tn(2, 1, {0.1, 0.9}));
  const std::vector<Index> grp = {0, 0};
  EXPECT_NEAR(softmax_aggregate(h, grp, 1, ad::constant(Tn::scalar(0.0))).value()(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(softmax_aggregate(h, grp, 1, ad::constant(Tn::scalar(40.0))).value()(0, 0), 0.9, 1e-3);
  EXPECT_NEAR(softmax_aggregate(h, grp, 1, ad::constant(Tn::scalar(-40.0))).value()(0, 0), 0.1, 1e-3);
}

TEST(GaLayers, SoftmaxAggregateMatchesFormula) {
  std::mt19937_64 rng(4);
  const Tn h = random_tensor(5, 3, rng);
  const Tn got = softmax_aggregate(ad::constant(h), std::vector<Index>(5, 0), 1, ad::constant(Tn::scalar(1.0))).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double z = 0, s = 0;
    for (std::size_t k = 0; k < 5; ++k) z += std::exp(h(k, c));
    for (std::size_t k = 0; k < 5; ++k) s += std::exp(h(k, c)) / z * h(k, c);
    EXPECT_NEAR(got(0, c), s, 1e-12);
  }
}

TEST(GaLayers, SoftmaxIsolatedNodeGetsZero) {
  const V h = ad::constant(Tn(2, 1, {0.3, 0.4}));
  const Tn out = softmax_aggregate(h, {0, 0}, 3, ad::constant(Tn::scalar(1.0))).value();
  EXPECT_EQ(out(1, 0), 0.0);
  EXPECT_EQ(out(2, 0), 0.0);
}

TEST(GaLayers, CombinedAggregateCases) {
  const V t = ad::constant(Tn::scalar(3.0));
  const V single = ad::constant(Tn(2, 2, {0.2, -0.4, 0.5, 0.1}));
  const Tn out = combined_aggregate(single, {0, 1}, 2, t).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.data[i], 3.0 * single.value().data[i], 1e-12);
  for (double tv : {-5.0, 0.0, 7.0}) {
    const Tn c = combined_aggregate(ad::constant(Tn(3, 1, 0.37)), {0, 0, 0}, 1, ad::constant(Tn::scalar(tv))).value();
    EXPECT_NEAR(c(0, 0), 3 * 0.37, 1e-12);
  }
}

TEST(GaLayers, CombinedAggregateMatchesComponents) {
  std::mt19937_64 rng(5);
  const std::size_t e = 40, n = 7, d = 4;
  const Tn h = random_tensor(e, d, rng);
  std::vector<Index> grp(e);
  for (auto& g : grp) g = static_cast<Index>(rng() % n);
  const double t = 1.7;
  const Tn got = combined_aggregate(ad::constant(h), grp, n, ad::constant(Tn::scalar(t))).value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      double mx = -1e300, sum = 0, z = 0, s = 0;
      std::size_t cnt = 0;
      for (std::size_t k = 0; k < e; ++k) {
        if (grp[k] != i) continue;
        mx = std::max(mx, h(k, c));
        sum += h(k, c);
        ++cnt;
        z += std::exp(t * h(k, c));
      }
      for (std::size_t k = 0; k < e; ++k) {
        if (grp[k] == i) s += std::exp(t * h(k, c)) / z * h(k, c);
      }
      const double expect = cnt == 0 ? 0.0 : mx + sum / cnt + s;
      EXPECT_NEAR(got(i, c), expect, 1e-12);
    }
  }
}

TEST(GaLayers, AggregationEdgeOrderInvariance) {
  std::mt19937_64 rng(6);
  const std::size_t e = 50, n = 6;
  const Tn h = random_tensor(e, 3, rng);
  std::vector<Index> grp(e);
  for (auto& g : grp) g = static_cast<Index>(rng() % n);
  std::vector<std::size_t> perm(e);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tn hp(e, 3);
  std::vector<Index> gp(e);
  for (std::size_t k = 0; k < e; ++k) {
    for (std::size_t c = 0; c < 3; ++c) hp(k, c) = h(perm[k], c);
    gp[k] = grp[perm[k]];
  }
  const V t = ad::constant(Tn::scalar(2.0));
  const Tn a = combined_aggregate(ad::constant(h), grp, n, t).value();
  const Tn b = combined_aggregate(ad::constant(hp), gp, n, t).value();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-10);
}

TEST(GaLayers, SoftmaxMonotoneTowardMax) {
  std::mt19937_64 rng(7);
  const std::size_t e = 30, n = 4;
  const Tn h = random_tensor(e, 5, rng);
  std::vector<Index> grp(e);
  for (std::size_t k = 0; k < e; ++k) grp[k] = static_cast<Index>(k % n);
  const Tn mx = ad::scatter_reduce(ad::constant(h), grp, n, ad::Reduce::Max).value();
  double prev = 1e300;
  for (double t : {1.0, 5.0, 10.0, 20.0, 40.0}) {
    const Tn s = softmax_aggregate(ad::constant(h), grp, n, ad::constant(Tn::scalar(t))).value();
    double gap = 0;
    for (std::size_t i = 0; i < s.numel(); ++i) gap = std::max(gap, std::abs(s.data[i] - mx.data[i]));
    EXPECT_LE(gap, prev);
    prev = gap;
  }
  const Tn mean = ad::scatter_reduce(ad::constant(h), grp, n, ad::Reduce::Mean).value();
  const Tn t0 = softmax_aggregate(ad::constant(h), grp, n, ad::constant(Tn::scalar(0.0))).value();
  for (std::size_t i = 0; i < t0.numel(); ++i) EXPECT_NEAR(t0.data[i], mean.data[i], 1e-12);
}

struct Fixture {
  std::vector<Vec3> pos;
  EdgeList edges;
  Tn x;
};

Fixture random_graph(std::size_t n, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Fixture f;
  f.pos = random_positions(n, rng);
  std::vector<Edge> und;
  for (std::uint32_t i = 0; i < n; ++i) {
    und.emplace_back(i, (i + 1) % n);
    und.emplace_back(i, (i + 3) % n);
  }
  for (auto& e : und) e = {std::min(e.first, e.second), std::max(e.first, e.second)};
  std::sort(und.begin(), und.end());
  und.erase(std::unique(und.begin(), und.end()), und.end());
  f.edges = EdgeList::bidirectional(und);
  f.x = random_tensor(n, c, rng);
  return f;
}

TEST(GaLayers, ZeroPsiLeavesPhiOfPe) {
  nn::ParamStore<double> store(1);
  GAConfig cfg;
  GAPlus<double> layer(store, "ga", 4, 12, cfg);
  auto& lin = layer.psi().linears()[0];
  lin.weight().var.mutable_value() = Tn(lin.in(), 12, 0.0);
  lin.bias().var.mutable_value() = Tn(1, 12, 0.0);
  const Fixture f = random_graph(8, 4, 2);
  const GAGeometry g{f.pos, f.pos, &f.edges};
  const nn::Context ctx{true, 0};
  const Tn msg = layer.message(g, ad::constant(f.x), ad::constant(f.x), ctx).value();
  Tn vrel(f.edges.size(), 3);
  for (std::size_t k = 0; k < f.edges.size(); ++k) {
    const Vec3 d = f.pos[f.edges.src[k]] - f.pos[f.edges.tgt[k]];
    for (int c = 0; c < 3; ++c) vrel(k, c) = d[c];
  }
  const Tn expect = layer.phi()(positional_embedding(ad::constant(vrel), layer.config().pe), ctx).value();
  for (std::size_t i = 0; i < msg.numel(); ++i) EXPECT_NEAR(msg.data[i], expect.data[i], 1e-12);
}

TEST(GaLayers, NoEdgesGivesZeros) {
  nn::ParamStore<double> store(1);
  GAPlus<double> layer(store, "ga", 3, 6, {});
  std::mt19937_64 rng(1);
  const auto pos = random_positions(5, rng);
  const EdgeList none;
  const Tn out = layer({pos, pos, &none}, ad::constant(random_tensor(5, 3, rng)), ad::constant(random_tensor(5, 3, rng)), {})
                     .value();
  EXPECT_EQ(out.rows(), 5u);
  EXPECT_EQ(out.cols(), 6u);
  for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(GaLayers, FullLayerMatchesComposition) {
  nn::ParamStore<double> store(3);
  GAPlus<double> layer(store, "ga", 5, 12, {});
  const Fixture f = random_graph(12, 5, 3);
  const GAGeometry g{f.pos, f.pos, &f.edges};
  const nn::Context ctx{true, 0};
  const V x = ad::constant(f.x);
  const Tn full = layer(g, x, x, ctx).value();

  const V xrel = relative_features(x, x, f.edges);
  Tn vi(f.edges.size(), 3), vrel(f.edges.size(), 3);
  for (std::size_t k = 0; k < f.edges.size(); ++k) {
    for (int c = 0; c < 3; ++c) {
      vi(k, c) = f.pos[f.edges.tgt[k]][c];
      vrel(k, c) = f.pos[f.edges.src[k]][c] - f.pos[f.edges.tgt[k]][c];
    }
  }
  const V h = layer.psi()(ad::concat_cols<double>({ad::constant(vi), ad::gather_rows(x, f.edges.tgt), xrel}), ctx);
  const V pe = positional_embedding(ad::constant(vrel), layer.config().pe);
  const V msg = layer.phi()(ad::add(ad::mul(h, pe), pe), ctx);
  const Tn composed = combined_aggregate(msg, f.edges.tgt, 12, layer.temperature().var).value();
  for (std::size_t i = 0; i < full.numel(); ++i) EXPECT_NEAR(full.data[i], composed.data[i], 1e-12);
}

TEST(GaLayers, PermutationEquivariance) {
  nn::ParamStore<double> store(4);
  GAPlus<double> layer(store, "ga", 4, 12, {});
  const Fixture f = random_graph(12, 4, 4);
  std::vector<Index> perm(12);  // old -> new
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(9);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> pos2(12);
  Tn x2(12, 4);
  for (std::size_t i = 0; i < 12; ++i) {
    pos2[perm[i]] = f.pos[i];
    for (std::size_t c = 0; c < 4; ++c) x2(perm[i], c) = f.x(i, c);
  }
  EdgeList e2 = f.edges;
  for (auto& s : e2.src) s = perm[s];
  for (auto& t : e2.tgt) t = perm[t];
  const nn::Context ctx{true, 0};
  const Tn a = layer({f.pos, f.pos, &f.edges}, ad::constant(f.x), ad::constant(f.x), ctx).value();
  const Tn b = layer({pos2, pos2, &e2}, ad::constant(x2), ad::constant(x2), ctx).value();
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(a(i, c), b(perm[i], c));
  }
}

TEST(GaLayers, GradCheckFullLayerIncludingTemperature) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    nn::ParamStore<double> store(seed);
    GAPlus<double> layer(store, "ga", 4, 6, {});
    const Fixture f = random_graph(12, 4, seed + 10);
    std::mt19937_64 rng(seed);
    // Hierarchical flavor: 5 targets drawn from 12 sources.
    const auto tgt_pos = random_positions(5, rng);
    const EdgeList hier = random_edges(12, 5, 30, rng);
    V xs = V::leaf(f.x, true);
    V xt = V::leaf(random_tensor(5, 4, rng), true);
    const Tn proj = random_tensor(5, 6, rng);
    const nn::Context ctx{true, 0};
    std::vector<std::pair<std::string, V>> leaves = {{"x_src", xs}, {"x_tgt", xt}};
    for (auto& p : store.params()) leaves.emplace_back(p.name, p.var);
    const auto report = ad::grad_check(
        [&] { return ad::sum_all(ad::mul(layer({f.pos, tgt_pos, &hier}, xs, xt, ctx), ad::constant(proj))); }, leaves);
    EXPECT_TRUE(report.pass) << "seed " << seed << " err " << report.max_rel_error;
    EXPECT_LT(report.skipped_fraction(), 0.1);
    const auto& tl = report.leaves.back();
    EXPECT_EQ(tl.name, "ga.t");
    EXPECT_EQ(tl.checked, 1u);
    EXPECT_NE(layer.temperature().var.grad().data[0], 0.0);
  }
}

TEST(GaLayers, EdgeListConversions) {
  const std::vector<Edge> und = {{0, 1}, {1, 2}};
  const EdgeList b = EdgeList::bidirectional(und);
  EXPECT_EQ(b.src, (std::vector<Index>{0, 1, 1, 2}));
  EXPECT_EQ(b.tgt, (std::vector<Index>{1, 0, 2, 1}));
  const std::vector<DirectedEdge> hier = {{0, 5}, {1, 3}};
  const EdgeList h = EdgeList::from_hierarchical(hier);
  EXPECT_EQ(h.src, (std::vector<Index>{5, 3}));
  EXPECT_EQ(h.tgt, (std::vector<Index>{0, 1}));
}

}  // namespace
}  // namespace lmseg
