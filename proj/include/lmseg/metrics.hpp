// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Confusion-matrix segmentation metrics.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmseg/error.hpp"

namespace lmseg {

struct SegReport {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> confusion;  // row-major [gt][pred]
  std::vector<double> per_class_iou;     // 0 for classes absent from ground truth
  std::vector<double> per_class_recall;
  std::vector<bool> present;             // class occurs in ground truth
  double miou = 0.0;
  double oa = 0.0;
  double macc = 0.0;
  double f1 = 0.0;

  std::uint64_t at(std::size_t gt, std::size_t pred) const { return confusion[gt * num_classes + pred]; }
};

/// Accumulates predictions into a confusion matrix.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k) : k_(k), c_(k * k, 0) {
    if (k == 0) fail(ErrorCode::InvalidConfig, "at least one class is required");
  }

  void add(std::span<const int> pred, std::span<const int> gt) {
    if (pred.size() != gt.size()) {
      fail(ErrorCode::LengthMismatch, "prediction has " + std::to_string(pred.size()) + " labels, ground truth " +
                                          std::to_string(gt.size()));
    }
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] < 0 || static_cast<std::size_t>(gt[i]) >= k_ || pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= k_) {
        fail(ErrorCode::InvalidLabel, "label outside [0," + std::to_string(k_) + ") at " + std::to_string(i));
      }
      ++c_[static_cast<std::size_t>(gt[i]) * k_ + static_cast<std::size_t>(pred[i])];
    }
  }

  SegReport report() const {
    SegReport r;
    r.num_classes = k_;
    r.confusion = c_;
    r.per_class_iou.assign(k_, 0.0);
    r.per_class_recall.assign(k_, 0.0);
    r.present.assign(k_, false);
    std::vector<double> row(k_, 0.0), col(k_, 0.0);
    double total = 0.0, trace = 0.0;
    for (std::size_t g = 0; g < k_; ++g) {
      for (std::size_t p = 0; p < k_; ++p) {
        const auto v = static_cast<double>(c_[g * k_ + p]);
        row[g] += v;
        col[p] += v;
        total += v;
      }
      trace += static_cast<double>(c_[g * k_ + g]);
    }
    std::size_t present = 0;
    for (std::size_t k = 0; k < k_; ++k) {
      if (row[k] == 0.0) continue;
      r.present[k] = true;
      ++present;
      const auto tp = static_cast<double>(c_[k * k_ + k]);
      r.per_class_iou[k] = tp / (row[k] + col[k] - tp);
      r.per_class_recall[k] = tp / row[k];
      r.miou += r.per_class_iou[k];
      r.macc += r.per_class_recall[k];
    }
    if (present > 0) {
      r.miou /= static_cast<double>(present);
      r.macc /= static_cast<double>(present);
    }
    r.oa = total > 0.0 ? trace / total : 0.0;
    auto f1_of = [&](std::size_t k) {
      const auto tp = static_cast<double>(c_[k * k_ + k]);
      const double p = col[k] > 0.0 ? tp / col[k] : 0.0;
      const double rc = row[k] > 0.0 ? tp / row[k] : 0.0;
      return p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    };
    if (k_ == 2) {
      r.f1 = f1_of(1);
    } else if (present > 0) {
      for (std::size_t k = 0; k < k_; ++k) {
        if (r.present[k]) r.f1 += f1_of(k);
      }
      r.f1 /= static_cast<double>(present);
    }
    return r;
  }

 private:
  std::size_t k_;
  std::vector<std::uint64_t> c_;
};

/// IoU, recall and mIoU/mAcc over classes present in ground truth; OA =
/// trace / total; F1 is the positive-class (label 1) score when K = 2 and the
/// macro average over present classes otherwise.
inline SegReport evaluate(std::span<const int> pred, std::span<const int> gt, std::size_t k) {
  ConfusionMatrix cm(k);
  cm.add(pred, gt);
  return cm.report();
}

}  // namespace lmseg
