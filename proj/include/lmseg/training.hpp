// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Augmentation, class weighting, AdamW with cosine annealing, and the
// epoch loop with per-epoch validation.

#include <Eigen/Geometry>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmseg/dual_graph.hpp"
#include "lmseg/error.hpp"
#include "lmseg/metrics.hpp"
#include "lmseg/network.hpp"
#include "lmseg/nn.hpp"
#include "lmseg/ops.hpp"
#include "lmseg/seed.hpp"

namespace lmseg {

struct AugmentConfig {
  bool rotate_z = true;
  bool tilt = true;
  bool jitter = true;
  double tilt_degrees = 1.0;
  double jitter_amplitude = 0.001;

  bool any() const { return rotate_z || tilt || jitter; }
};

/// z-rotation in [-180, 180] degrees, then x- and y-rotations in
/// [-tilt, tilt], then per-node uniform jitter. Normal features are rotated
/// with the positions; colors are untouched.
inline DualGraph augment(DualGraph g, std::uint64_t seed, const AugmentConfig& cfg = {}) {
  if (!cfg.any()) return g;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  constexpr double deg = std::numbers::pi / 180.0;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  if (cfg.rotate_z) r = Eigen::AngleAxisd(u(rng) * std::numbers::pi, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  if (cfg.tilt) {
    const double ax = u(rng) * cfg.tilt_degrees * deg;
    const double ay = u(rng) * cfg.tilt_degrees * deg;
    r = Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()).toRotationMatrix() *
        Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()).toRotationMatrix() * r;
  }
  for (auto& p : g.positions) p = r * p;
  const int noff = g.feature_spec.normal_offset();
  if (noff >= 0) {
    const auto c = static_cast<std::size_t>(g.channels);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      double* row = g.features.data() + i * c + noff;
      const Eigen::Vector3d n = r * Eigen::Vector3d(row[0], row[1], row[2]);
      row[0] = n[0];
      row[1] = n[1];
      row[2] = n[2];
    }
  }
  if (cfg.jitter) {
    for (auto& p : g.positions) {
      for (int k = 0; k < 3; ++k) p[k] += u(rng) * cfg.jitter_amplitude;
    }
  }
  return g;
}

inline std::vector<std::uint64_t> label_histogram(std::span<const DualGraph> graphs, std::size_t k) {
  std::vector<std::uint64_t> h(k, 0);
  for (const auto& g : graphs) {
    if (!g.labels) fail(ErrorCode::InvalidLabel, "training graph carries no labels");
    for (int l : *g.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= k) fail(ErrorCode::InvalidLabel, "label " + std::to_string(l) + " outside class range");
      ++h[static_cast<std::size_t>(l)];
    }
  }
  return h;
}

/// Inverse-frequency weights scaled so the present classes average to one;
/// absent classes get weight zero.
inline std::vector<double> class_weights(std::span<const std::uint64_t> histogram) {
  double total = 0.0;
  for (auto c : histogram) total += static_cast<double>(c);
  if (total == 0.0) fail(ErrorCode::AllZero, "class histogram is all zero");
  double inv_sum = 0.0;
  std::size_t present = 0;
  for (auto c : histogram) {
    if (c == 0) continue;
    inv_sum += total / static_cast<double>(c);
    ++present;
  }
  std::vector<double> w(histogram.size(), 0.0);
  for (std::size_t k = 0; k < histogram.size(); ++k) {
    if (histogram[k] == 0) continue;
    w[k] = total / static_cast<double>(histogram[k]) / inv_sum * static_cast<double>(present);
  }
  return w;
}

/// lr0 * (1 + cos(pi * step / total)) / 2.
inline double cosine_lr(double lr0, std::uint64_t step, std::uint64_t total) {
  if (total == 0) return lr0;
  const double x = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * x));
}

struct AdamWConfig {
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW update at learning rate `lr`; `step` counts updates from 1.
/// Weight decay shrinks weights directly and never enters the moments.
template <class T>
void optimizer_step(nn::ParamStore<T>& store, const AdamWConfig& cfg, double lr, std::uint64_t step) {
  if (step == 0) fail(ErrorCode::InvalidConfig, "optimizer steps count from 1");
  for (const auto& p : store.params()) {
    for (T g : p.var.grad().data) {
      if (!std::isfinite(g)) fail(ErrorCode::NonFiniteGradient, "non-finite gradient in " + p.name);
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T decay = static_cast<T>(1.0 - lr * cfg.weight_decay);
  for (auto& p : store.params()) {
    auto& w = p.var.mutable_value().data;
    const auto& g = p.var.grad().data;
    const bool has_grad = !g.empty();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T gi = has_grad ? g[i] : T(0);
      p.m.data[i] = b1 * p.m.data[i] + (T(1) - b1) * gi;
      p.v.data[i] = b2 * p.v.data[i] + (T(1) - b2) * gi * gi;
      const double mhat = static_cast<double>(p.m.data[i]) / bc1;
      const double vhat = static_cast<double>(p.v.data[i]) / bc2;
      w[i] = w[i] * decay - static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 1e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 30;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 20240611;
  AugmentConfig augmentation;
  bool restore_best = true;

  void validate() const {
    if (!(lr > 0.0)) fail(ErrorCode::InvalidConfig, "learning rate must be positive");
    if (!(weight_decay >= 0.0)) fail(ErrorCode::InvalidConfig, "weight decay must be non-negative");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail(ErrorCode::InvalidConfig, "label smoothing outside [0,1)");
    if (epochs == 0) fail(ErrorCode::InvalidConfig, "at least one epoch is required");
    if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch size must be positive");
  }
};

struct Prediction {
  std::vector<int> labels;
  std::vector<float> confidence;  // softmax probability of the predicted class
};

template <class T>
Prediction predict(const LMSeg<T>& model, const DualGraph& g, std::uint64_t seed) {
  ad::NoGradGuard guard;
  const auto logits = model.forward(g, {false, seed}).logits.value();
  Prediction p;
  const std::size_t n = logits.rows(), k = logits.cols();
  p.labels.resize(n);
  p.confidence.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.row(i);
    const std::size_t best = static_cast<std::size_t>(std::max_element(z, z + k) - z);
    double se = 0.0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(static_cast<double>(z[j] - z[best]));
    if (!std::isfinite(se)) fail(ErrorCode::NonFiniteValue, "non-finite logits");
    p.labels[i] = static_cast<int>(best);
    p.confidence[i] = static_cast<float>(1.0 / se);
  }
  return p;
}

template <class T>
SegReport evaluate_model(const LMSeg<T>& model, std::span<const DualGraph> graphs, std::uint64_t seed) {
  ConfusionMatrix cm(model.config().num_classes);
  for (const auto& g : graphs) {
    if (!g.labels) fail(ErrorCode::InvalidLabel, "evaluation graph carries no labels");
    cm.add(predict(model, g, seed).labels, *g.labels);
  }
  return cm.report();
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double miou = 0.0;
  double oa = 0.0;
  double macc = 0.0;
  double f1 = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  std::vector<double> lr_trace;  // learning rate of every optimizer step
  std::vector<double> step_losses;
  double best_miou = -1.0;
  std::size_t best_epoch = 0;
  std::uint64_t steps = 0;
};

template <class T>
struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const LMSeg<T>&, std::uint64_t step)> on_best;
};

namespace detail {

template <class T>
struct Snapshot {
  std::vector<ad::Tensor<T>> values;
  std::vector<ad::NormStats<T>> stats;

  static Snapshot take(const nn::ParamStore<T>& store) {
    Snapshot s;
    for (const auto& p : store.params()) s.values.push_back(p.var.value());
    for (const auto& b : store.buffers()) s.stats.push_back(b.stats);
    return s;
  }

  void restore(nn::ParamStore<T>& store) const {
    std::size_t i = 0;
    for (auto& p : store.params()) p.var.mutable_value() = values[i++];
    i = 0;
    for (auto& b : store.buffers()) b.stats = stats[i++];
  }
};

}  // namespace detail

/// Epoch loop: augment -> forward -> loss -> backward, one optimizer step per
/// batch_size tiles (gradient accumulation), validation after every epoch.
/// The validation set falls back to the unaugmented training set when empty.
template <class T>
TrainResult train(LMSeg<T>& model, std::span<const DualGraph> train_set, std::span<const DualGraph> val_set,
                  const TrainConfig& cfg, const TrainHooks<T>& hooks = {}) {
  cfg.validate();
  if (train_set.empty()) fail(ErrorCode::EmptyMesh, "training set is empty");
  const std::size_t k = model.config().num_classes;
  const std::vector<double> weights = class_weights(label_histogram(train_set, k));
  const std::span<const DualGraph> val = val_set.empty() ? train_set : val_set;

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total_steps = steps_per_epoch * cfg.epochs;
  AdamWConfig adam;
  adam.weight_decay = cfg.weight_decay;

  TrainResult result;
  detail::Snapshot<T> best;
  auto& store = model.params();
  store.zero_grad();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {epoch, 0x5f}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      double batch_loss = 0.0;
      for (std::size_t pos = lo; pos < hi; ++pos) {
        const std::size_t tile = order[pos];
        const DualGraph g = augment(train_set[tile], derive_seed(cfg.seed, {epoch, tile, 1}), cfg.augmentation);
        const nn::Context ctx{true, derive_seed(cfg.seed, {epoch, tile, 2})};
        ad::Var<T> loss;
        try {
          const auto out = model.forward(g, ctx);
          loss = ad::smoothed_weighted_ce(out.logits, *g.labels, weights, cfg.label_smoothing);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NonFiniteLoss) throw;
          fail(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch + 1) + ", tile " + std::to_string(tile) + ": " + e.what());
        }
        const double lv = static_cast<double>(loss.value().data[0]);
        loss_sum += lv;
        batch_loss += lv;
        ad::backward(ad::scale(loss, static_cast<T>(1.0 / static_cast<double>(hi - lo))));
      }
      const double lr = cosine_lr(cfg.lr, result.steps, total_steps);
      ++result.steps;
      optimizer_step(store, adam, lr, result.steps);
      store.zero_grad();
      result.lr_trace.push_back(lr);
      result.step_losses.push_back(batch_loss / static_cast<double>(hi - lo));
    }

    const SegReport rep = evaluate_model(model, val, cfg.eval_seed);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.miou = rep.miou;
    rec.oa = rep.oa;
    rec.macc = rep.macc;
    rec.f1 = rep.f1;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back(rec);
    if (rep.miou > result.best_miou) {
      result.best_miou = rep.miou;
      result.best_epoch = epoch + 1;
      if (cfg.restore_best) best = detail::Snapshot<T>::take(store);
      if (hooks.on_best) hooks.on_best(model, result.steps);
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (cfg.restore_best && !best.values.empty()) best.restore(store);
  return result;
}

}  // namespace lmseg
