// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Timing of the hierarchical sub-samplers on random point sets.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmseg/error.hpp"
#include "lmseg/graph_pooling.hpp"

namespace lmseg {

struct BenchRow {
  std::string method;
  std::size_t n = 0;
  std::size_t k = 0;  // nodes retained
  double seconds = 0.0;  // per call
};

/// Times one sampler ("random" or "fps") retaining a third of n uniformly
/// random points. Calls repeat until `min_seconds` have elapsed and the mean
/// per-call time is reported.
inline BenchRow bench_subsample(const std::string& method, std::size_t n, std::uint64_t seed, double min_seconds = 0.05) {
  if (method != "random" && method != "fps") fail(ErrorCode::InvalidConfig, "unknown sampler '" + method + "'");
  if (n < 2) fail(ErrorCode::InvalidConfig, "benchmark size must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  std::vector<Edge> chain;
  chain.reserve(n - 1);
  for (std::uint32_t i = 0; i + 1 < n; ++i) chain.emplace_back(i, i + 1);

  BenchRow row;
  row.method = method;
  row.n = n;
  row.k = subsample_count(n, 1.0 / 3.0);
  std::size_t reps = 0;
  std::size_t sink = 0;
  const auto t0 = std::chrono::steady_clock::now();
  double elapsed = 0.0;
  do {
    if (method == "random") {
      sink += random_subsample(pts, chain, 1.0 / 3.0, seed + reps).size();
    } else {
      sink += fps_subsample(pts, row.k, seed + reps).size();
    }
    ++reps;
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } while (elapsed < min_seconds);
  if (sink != reps * row.k) fail(ErrorCode::OutOfRange, "sampler returned an unexpected count");
  row.seconds = elapsed / static_cast<double>(reps);
  return row;
}

/// Least-squares slope of log(seconds) against log(n).
inline double loglog_slope(std::span<const BenchRow> rows) {
  if (rows.size() < 2) fail(ErrorCode::InvalidConfig, "a slope needs at least two sizes");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double x = std::log(static_cast<double>(r.n));
    const double y = std::log(r.seconds);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(rows.size());
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace lmseg
