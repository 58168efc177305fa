// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference check of reverse-mode gradients at float64.
//
// Each coordinate is probed with step eps and eps/2. When the two estimates
// disagree the function is not smooth there (a relu or max switching branch
// inside the probe window) and the coordinate is counted as skipped rather
// than compared.
//
// Differences below the central-difference rounding level, about
// 16 ulp(|f|) / (2 eps), cannot be resolved at float64. The relative-error
// floor is raised to that level over the tolerance, which matters only for
// gradients that are (near) exactly zero, such as a bias feeding a batch norm.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lmseg/error.hpp"
#include "lmseg/tensor.hpp"

namespace lmseg::ad {

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-5;  // denominator floor for relative errors
  std::size_t max_coords_per_leaf = 0;  // 0 checks every coordinate
};

struct LeafReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<LeafReport> leaves;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool pass = true;

  double skipped_fraction() const {
    const std::size_t total = checked + skipped;
    return total == 0 ? 0.0 : static_cast<double>(skipped) / static_cast<double>(total);
  }
};

inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// `f` rebuilds the scalar output from the current leaf values on each call.
inline GradCheckReport grad_check(const std::function<Var<double>()>& f,
                                  std::vector<std::pair<std::string, Var<double>>> leaves,
                                  const GradCheckOptions& opt = {}) {
  for (auto& [name, v] : leaves) v.zero_grad();
  double floor = opt.floor;
  {
    Var<double> y = f();
    if (y.value().numel() != 1) fail(ErrorCode::ShapeMismatch, "grad_check needs a scalar function");
    const double f0 = y.value().data[0];
    if (!std::isfinite(f0)) fail(ErrorCode::NonFiniteValue, "function value is not finite");
    const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(f0), 1.0) / (2.0 * opt.eps);
    floor = std::max(floor, noise / opt.tolerance);
    backward(y);
  }
  auto eval = [&] {
    NoGradGuard guard;
    const double v = f().value().data[0];
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "function value is not finite under perturbation");
    return v;
  };

  GradCheckReport report;
  for (auto& [name, v] : leaves) {
    LeafReport lr;
    lr.name = name;
    std::vector<double>& x = v.mutable_value().data;
    const std::vector<double> analytic = v.grad().data.empty() ? std::vector<double>(x.size(), 0.0) : v.grad().data;
    std::size_t stride = 1;
    if (opt.max_coords_per_leaf > 0 && x.size() > opt.max_coords_per_leaf) {
      stride = (x.size() + opt.max_coords_per_leaf - 1) / opt.max_coords_per_leaf;
    }
    for (std::size_t i = 0; i < x.size(); i += stride) {
      const double x0 = x[i];
      auto probe = [&](double h) {
        x[i] = x0 + h;
        const double fp = eval();
        x[i] = x0 - h;
        const double fm = eval();
        x[i] = x0;
        return (fp - fm) / (2.0 * h);
      };
      const double fd = probe(opt.eps);
      const double fd_half = probe(0.5 * opt.eps);
      if (relative_error(fd, fd_half, floor) > opt.tolerance) {
        ++lr.skipped;
        continue;
      }
      const double err = relative_error(analytic[i], fd, floor);
      lr.max_rel_error = std::max(lr.max_rel_error, err);
      ++lr.checked;
    }
    lr.pass = lr.max_rel_error < opt.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, lr.max_rel_error);
    report.checked += lr.checked;
    report.skipped += lr.skipped;
    report.pass = report.pass && lr.pass;
    report.leaves.push_back(std::move(lr));
  }
  return report;
}

}  // namespace lmseg::ad
