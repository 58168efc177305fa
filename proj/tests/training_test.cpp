// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lmseg/checkpoint.hpp"
#include "lmseg/config.hpp"
#include "lmseg/metrics.hpp"
#include "lmseg/synth.hpp"
#include "lmseg/training.hpp"

namespace lmseg {
namespace {

using Tn = ad::Tensor<double>;

DualGraph tile_graph(std::uint64_t seed, int grid = 10) {
  SynthConfig cfg;
  cfg.grid_min = cfg.grid_max = grid;
  return normalize_scale(build_dual(synth_tile(seed, cfg), {}));
}

TEST(Training, AugmentDisabledIsIdentity) {
  const DualGraph g = tile_graph(1);
  AugmentConfig off{false, false, false};
  const DualGraph a = augment(g, 5, off);
  EXPECT_EQ(a.positions, g.positions);
  EXPECT_EQ(a.features, g.features);
}

TEST(Training, AugmentIsometryAndDeterminism) {
  const DualGraph g = tile_graph(2);
  AugmentConfig rot{true, true, false};
  const DualGraph a = augment(g, 7, rot);
  for (std::size_t i = 0; i + 1 < g.num_nodes(); i += 7) {
    for (std::size_t j = i + 1; j < g.num_nodes(); j += 13) {
      EXPECT_NEAR((a.positions[i] - a.positions[j]).norm(), (g.positions[i] - g.positions[j]).norm(), 1e-9);
    }
  }
  const int no = g.feature_spec.normal_offset();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const double* r = a.feature_row(i);
    EXPECT_NEAR(Vec3(r[no], r[no + 1], r[no + 2]).norm(), 1.0, 1e-9);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(r[c], g.feature_row(i)[c]);
  }
  AugmentConfig z_only{true, false, false};
  const DualGraph z = augment(g, 9, z_only);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    EXPECT_NEAR(z.positions[i][2], g.positions[i][2], 1e-12);
    EXPECT_NEAR(z.feature_row(i)[no + 2], g.feature_row(i)[no + 2], 1e-12);
  }
  const DualGraph again = augment(g, 7, rot);
  EXPECT_EQ(again.positions, a.positions);
  const DualGraph jit = augment(g, 3, AugmentConfig{false, false, true});
  for (std::size_t i = 0; i < g.num_nodes(); ++i) EXPECT_LE((jit.positions[i] - g.positions[i]).cwiseAbs().maxCoeff(), 0.001);
}

TEST(Training, ClassWeightExamples) {
  const std::vector<std::uint64_t> uniform = {10, 10}, skew = {90, 10}, absent = {5, 0, 5}, none = {0, 0};
  auto w = class_weights(uniform);
  EXPECT_NEAR(w[0], 1.0, 1e-12);
  EXPECT_NEAR(w[1], 1.0, 1e-12);
  w = class_weights(skew);
  EXPECT_NEAR(w[0], 0.2, 1e-12);
  EXPECT_NEAR(w[1], 1.8, 1e-12);
  w = class_weights(absent);
  EXPECT_EQ(w, (std::vector<double>{1.0, 0.0, 1.0}));
  try {
    class_weights(none);
    FAIL() << "expected AllZero";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllZero);
  }
}

double ce(const Tn& z, const std::vector<int>& lab, const std::vector<double>& w, double s) {
  return ad::smoothed_weighted_ce<double>(ad::constant(z), lab, w, s).value().data[0];
}

TEST(Training, LossExamples) {
  const std::vector<double> w4(4, 1.0);
  EXPECT_NEAR(ce(Tn(3, 4, 0.0), {0, 1, 3}, w4, 0.0), std::log(4.0), 1e-12);
  EXPECT_LT(ce(Tn(1, 2, {60.0, -60.0}), {0}, {1.0, 1.0}, 0.0), 1e-12);
  try {
    ce(Tn(1, 2, 0.0), {2}, {1.0, 1.0}, 0.0);
    FAIL() << "expected InvalidLabel";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidLabel);
  }
}

TEST(Training, LossMatchesFormula) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  Tn z(8, 3);
  for (auto& v : z.data) v = u(rng);
  const std::vector<int> lab = {0, 2, 1, 1, 0, 2, 2, 1};
  const std::vector<double> w = {0.5, 1.2, 1.3};
  const double s = 0.1;
  double total = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    double se = 0;
    for (int k = 0; k < 3; ++k) se += std::exp(z(i, k));
    for (int k = 0; k < 3; ++k) {
      const double q = (k == lab[i] ? 1.0 - s : 0.0) + s / 3.0;
      total -= w[lab[i]] * q * std::log(std::exp(z(i, k)) / se);
    }
  }
  EXPECT_NEAR(ce(z, lab, w, s), total / 8.0, 1e-12);
}

TEST(Training, LossBoundedByTargetEntropy) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01(0, 3);
  const double s = 0.1;
  const double on = 1.0 - s + s / 2, off = s / 2;
  const double entropy = -(on * std::log(on) + off * std::log(off));
  for (int t = 0; t < 200; ++t) {
    Tn z(1, 2, {n01(rng), n01(rng)});
    EXPECT_GE(ce(z, {t % 2}, {1.0, 1.0}, s), entropy - 1e-9);
  }
  EXPECT_NEAR(ce(Tn(1, 2, {std::log(on), std::log(off)}), {0}, {1.0, 1.0}, s), entropy, 1e-12);
}

TEST(Training, OptimizerDecoupledDecay) {
  nn::ParamStore<double> store;
  auto& p = store.add("w", Tn(1, 3, {1.0, -2.0, 0.5}));
  p.var.zero_grad();
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  optimizer_step(store, cfg, 0.1, 1);
  EXPECT_EQ(p.var.value().data, (std::vector<double>{1.0, -2.0, 0.5}));
  cfg.weight_decay = 0.01;
  optimizer_step(store, cfg, 0.1, 2);
  EXPECT_EQ(p.var.value().data[0], 1.0 * (1.0 - 0.1 * 0.01));
  EXPECT_EQ(p.var.value().data[1], -2.0 * (1.0 - 0.1 * 0.01));
  EXPECT_THROW(optimizer_step(store, cfg, 0.1, 0), Error);
}

TEST(Training, OptimizerRejectsNonFiniteGradient) {
  nn::ParamStore<double> store;
  auto& p = store.add("w", Tn(1, 1, 1.0));
  ad::backward(ad::scale(p.var, std::nan("")));
  try {
    optimizer_step(store, AdamWConfig{}, 0.1, 1);
    FAIL() << "expected NonFiniteGradient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
}

TEST(Training, OptimizerQuadraticBowl) {
  nn::ParamStore<double> store;
  auto& p = store.add("w", Tn(1, 4, {3.0, -2.0, 1.5, 4.0}));
  const Tn scales(1, 4, {1.0, 2.0, 0.5, 3.0});
  AdamWConfig cfg;
  double prev = 1e300;
  for (std::uint64_t step = 1; step <= 10; ++step) {
    store.zero_grad();
    const auto loss = ad::sum_all(ad::mul(ad::mul(p.var, p.var), ad::constant(scales)));
    const double v = loss.value().data[0];
    if (step > 1) {
      EXPECT_LT(v, prev);
    }
    prev = v;
    ad::backward(loss);
    optimizer_step(store, cfg, 0.1, step);
  }
}

TEST(Training, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.01, 0, 100), 0.01);
  EXPECT_NEAR(cosine_lr(0.01, 100, 100), 0.0, 1e-18);
  EXPECT_NEAR(cosine_lr(0.01, 50, 100), 0.005, 1e-15);
}

TEST(Training, EvaluateExamples) {
  const std::vector<int> same = {0, 1, 1, 0, 1};
  const SegReport r = evaluate(same, same, 2);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.oa, 1.0);
  EXPECT_EQ(r.macc, 1.0);
  EXPECT_EQ(r.f1, 1.0);

  std::vector<int> gt, pred;
  auto push = [&](int g, int p, int n) {
    for (int i = 0; i < n; ++i) {
      gt.push_back(g);
      pred.push_back(p);
    }
  };
  push(0, 0, 8);
  push(0, 1, 2);
  push(1, 0, 1);
  push(1, 1, 9);
  const SegReport b = evaluate(pred, gt, 2);
  EXPECT_EQ(b.at(0, 1), 2u);
  EXPECT_NEAR(b.per_class_iou[0], 8.0 / 11.0, 1e-12);
  EXPECT_NEAR(b.per_class_iou[1], 9.0 / 12.0, 1e-12);
  EXPECT_NEAR(b.miou, 0.5 * (8.0 / 11.0 + 9.0 / 12.0), 1e-12);
  EXPECT_NEAR(b.oa, 17.0 / 20.0, 1e-12);
  EXPECT_NEAR(b.macc, 0.5 * (0.8 + 0.9), 1e-12);
  const double prec = 9.0 / 11.0, rec = 0.9;
  EXPECT_NEAR(b.f1, 2 * prec * rec / (prec + rec), 1e-12);

  const std::vector<int> zeros(6, 0), ones(6, 1);
  EXPECT_EQ(evaluate(zeros, ones, 2).miou, 0.0);
  try {
    evaluate(zeros, std::vector<int>(5, 0), 2);
    FAIL() << "expected LengthMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Training, EvaluateMatchesRecountAndPermutation) {
  std::mt19937_64 rng(11);
  const std::size_t k = 4, n = 20000;
  std::vector<int> gt(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    gt[i] = static_cast<int>(rng() % k);
    pred[i] = rng() % 3 == 0 ? static_cast<int>(rng() % k) : gt[i];
  }
  const SegReport r = evaluate(pred, gt, k);
  double iou_sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += gt[i] == static_cast<int>(c) && pred[i] == static_cast<int>(c);
      fp += gt[i] != static_cast<int>(c) && pred[i] == static_cast<int>(c);
      fn += gt[i] == static_cast<int>(c) && pred[i] != static_cast<int>(c);
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    EXPECT_NEAR(r.per_class_iou[c], iou, 1e-12);
    EXPECT_LE(r.per_class_iou[c], r.per_class_recall[c]);
    iou_sum += iou;
  }
  EXPECT_NEAR(r.miou, iou_sum / k, 1e-12);
  for (double m : {r.miou, r.oa, r.macc, r.f1}) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
  const std::vector<int> perm = {2, 0, 3, 1};
  std::vector<int> gp(n), pp(n);
  for (std::size_t i = 0; i < n; ++i) {
    gp[i] = perm[gt[i]];
    pp[i] = perm[pred[i]];
  }
  const SegReport q = evaluate(pp, gp, k);
  EXPECT_NEAR(q.miou, r.miou, 1e-12);
  EXPECT_NEAR(q.oa, r.oa, 1e-12);
  EXPECT_NEAR(q.macc, r.macc, 1e-12);
  EXPECT_NEAR(q.f1, r.f1, 1e-12);
}

ArchConfig small_arch() {
  ArchConfig a;
  a.stem_width = 8;
  a.stage_widths = {16, 32};
  return a;
}

TEST(Training, OneTileSmoke) {
  LMSeg<float> model(small_arch(), 1);
  const std::vector<DualGraph> data = {tile_graph(3)};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  std::size_t reports = 0;
  TrainHooks<float> hooks;
  hooks.on_epoch = [&](const EpochRecord&) { ++reports; };
  const TrainResult r = train<float>(model, data, {}, cfg, hooks);
  EXPECT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(reports, 1u);
  EXPECT_EQ(r.steps, 1u);
  EXPECT_TRUE(std::isfinite(r.trace[0].loss));
}

TEST(Training, LrTraceEndpointsAndDeterminism) {
  const std::vector<DualGraph> data = {tile_graph(4), tile_graph(5), tile_graph(6)};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 9;
  LMSeg<float> a(small_arch(), 2), b(small_arch(), 2);
  const TrainResult ra = train<float>(a, data, {}, cfg);
  const TrainResult rb = train<float>(b, data, {}, cfg);
  ASSERT_EQ(ra.lr_trace.size(), 6u);
  EXPECT_EQ(ra.lr_trace.front(), cfg.lr);
  EXPECT_LT(ra.lr_trace.back(), 0.1 * cfg.lr);
  EXPECT_EQ(ra.step_losses, rb.step_losses);
}

TEST(Training, CheckpointRoundTrip) {
  LMSeg<float> model(small_arch(), 3);
  const std::uint64_t step = 17;
  std::stringstream buf;
  write_checkpoint(buf, model, &step);
  const auto loaded = read_checkpoint<float>(buf);
  EXPECT_TRUE(loaded.has_optimizer);
  EXPECT_EQ(loaded.step, 17u);
  EXPECT_EQ(to_json(loaded.model->config()), to_json(model.config()));
  const DualGraph g = tile_graph(7);
  EXPECT_EQ(predict(*loaded.model, g, 1).labels, predict(model, g, 1).labels);
  const auto& pa = model.params().params();
  const auto& pb = loaded.model->params().params();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].var.value().data, pb[i].var.value().data);

  std::stringstream bad("LMSC0");
  EXPECT_THROW(read_checkpoint<float>(bad), Error);
}

TEST(Training, RunConfigJson) {
  RunConfig r;
  r.train.epochs = 7;
  r.arch.k_hier = 12;
  const RunConfig back = run_config_from_json(to_json(r));
  EXPECT_EQ(back.train.epochs, 7u);
  EXPECT_EQ(back.arch.k_hier, 12u);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"train", {{"lrr", 1}}}}), Error);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"train", {{"lr", -1.0}}}}), Error);
}

TEST(Training, SynthGeneratorContract) {
  const TriMesh a = synth_tile(77), b = synth_tile(77);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_EQ(*a.face_labels, *b.face_labels);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const TriMesh m = synth_tile(seed);
    std::size_t pos = 0;
    for (int l : *m.face_labels) pos += l == 1;
    const double ratio = static_cast<double>(pos) / static_cast<double>(m.num_faces());
    EXPECT_GE(ratio, 0.05) << seed;
    EXPECT_LE(ratio, 0.25) << seed;
  }
}

}  // namespace
}  // namespace lmseg
