// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pooling hierarchy over dual graphs: random node sub-sampling, k-NN edge
// sets, feature-similarity edge pooling, and a farthest-point sampler kept as
// a benchmark baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmseg/dual_graph.hpp"
#include "lmseg/error.hpp"
#include "lmseg/spatial_index.hpp"

namespace lmseg {

/// Directed edge (source, target). For k-NN sets source is the query node.
using DirectedEdge = std::pair<std::uint32_t, std::uint32_t>;

struct LevelGraph {
  int level = 1;
  std::vector<Vec3> positions;
  std::vector<std::uint32_t> parent_index;  // survivor -> node of the previous level
  std::vector<Edge> edges_sparse;           // parent edges with both endpoints kept
  std::vector<Edge> edges_local;            // after similarity pooling
  std::vector<DirectedEdge> edges_hier;     // survivor -> previous-level node
  std::size_t isolated = 0;                 // survivors left without local edges

  std::size_t size() const { return positions.size(); }
};

/// Number of nodes kept when retaining `ratio` of `n`.
inline std::size_t subsample_count(std::size_t n, double ratio) {
  // The epsilon keeps products like 9 * (1/3) from flooring to 2.
  const auto s = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  return std::max<std::size_t>(1, std::min(s, n));
}

/// Uniform sampling without replacement of max(1, floor(ratio*N)) nodes.
/// Survivors are kept in ascending parent order; ratio 1 is the identity.
inline LevelGraph random_subsample(std::span<const Vec3> positions, std::span<const Edge> edges, double ratio,
                                   std::uint64_t seed, int level = 1) {
  if (!(ratio > 0.0 && ratio <= 1.0)) fail(ErrorCode::InvalidConfig, "subsample ratio must lie in (0,1]");
  const std::size_t n = positions.size();
  if (n == 0) fail(ErrorCode::EmptyMesh, "cannot sub-sample an empty level");
  const std::size_t s = subsample_count(n, ratio);

  LevelGraph out;
  out.level = level;
  out.parent_index.resize(n);
  std::iota(out.parent_index.begin(), out.parent_index.end(), 0u);
  if (s < n) {
    std::vector<std::uint32_t> chosen;
    chosen.reserve(s);
    std::mt19937_64 rng(seed);
    // Selection sampling over a forward range: O(N) and order-preserving.
    std::sample(out.parent_index.begin(), out.parent_index.end(), std::back_inserter(chosen), s, rng);
    out.parent_index = std::move(chosen);
  }

  std::vector<std::int64_t> remap(n, -1);
  out.positions.resize(s);
  for (std::size_t i = 0; i < s; ++i) {
    remap[out.parent_index[i]] = static_cast<std::int64_t>(i);
    out.positions[i] = positions[out.parent_index[i]];
  }
  out.edges_sparse.reserve(edges.size() * s / n + 1);
  for (const Edge& e : edges) {
    const std::int64_t a = remap[e.first];
    const std::int64_t b = remap[e.second];
    if (a < 0 || b < 0) continue;
    out.edges_sparse.emplace_back(static_cast<std::uint32_t>(std::min(a, b)), static_cast<std::uint32_t>(std::max(a, b)));
  }
  // Remap is monotone, so canonical sorted input stays sorted; sort anyway for arbitrary input.
  if (!std::is_sorted(out.edges_sparse.begin(), out.edges_sparse.end())) {
    std::sort(out.edges_sparse.begin(), out.edges_sparse.end());
  }
  out.edges_sparse.erase(std::unique(out.edges_sparse.begin(), out.edges_sparse.end()), out.edges_sparse.end());
  out.edges_local = out.edges_sparse;
  return out;
}

/// Greedy farthest-point sampling from a seeded start node. O(N * count).
inline std::vector<std::uint32_t> fps_subsample(std::span<const Vec3> positions, std::size_t count, std::uint64_t seed) {
  const std::size_t n = positions.size();
  if (count > n) fail(ErrorCode::KTooLarge, "fps count exceeds point count");
  std::vector<std::uint32_t> out;
  if (count == 0) return out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  auto current = static_cast<std::uint32_t>(pick(rng));
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  for (std::size_t it = 0; it < count; ++it) {
    out.push_back(current);
    mind[current] = -1.0;
    double best = -1.0;
    std::uint32_t best_i = 0;
    const Vec3& c = positions[current];
    for (std::size_t i = 0; i < n; ++i) {
      if (mind[i] < 0.0) continue;
      const double d = squared_distance(positions[i], c);
      if (d < mind[i]) mind[i] = d;
      if (mind[i] > best) {
        best = mind[i];
        best_i = static_cast<std::uint32_t>(i);
      }
    }
    current = best_i;
  }
  return out;
}

/// For each query point, directed edges to its k nearest reference points.
inline std::vector<DirectedEdge> knn_edges(std::span<const Vec3> query, std::span<const Vec3> ref, std::size_t k) {
  if (k > ref.size()) fail(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(ref.size()));
  KdTree tree(ref);
  std::vector<DirectedEdge> out;
  out.reserve(query.size() * k);
  for (std::uint32_t q = 0; q < query.size(); ++q) {
    for (const Neighbor& nb : tree.knn(query[q], k)) out.emplace_back(q, nb.index);
  }
  return out;
}

/// Self-set variant: a node never lists itself.
inline std::vector<DirectedEdge> knn_edges(std::span<const Vec3> points, std::size_t k) {
  if (points.empty() || k > points.size() - 1) {
    fail(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(points.empty() ? 0 : points.size() - 1));
  }
  KdTree tree(points);
  std::vector<DirectedEdge> out;
  out.reserve(points.size() * k);
  for (std::uint32_t q = 0; q < points.size(); ++q) {
    for (const Neighbor& nb : tree.knn(points[q], k, q)) out.emplace_back(q, nb.index);
  }
  return out;
}

template <class F>
double cosine_similarity(std::span<const F> a, std::span<const F> b) {
  if (a.size() != b.size() || a.empty()) fail(ErrorCode::ShapeMismatch, "cosine_similarity needs equal non-empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
}

/// edges_sparse plus symmetrized k-NN edges whose endpoint features have
/// cosine similarity >= threshold. Parent edges are never dropped.
/// `features` is row-major level.size() x dim.
template <class F>
std::vector<Edge> edge_similarity_pool(const LevelGraph& level, std::span<const F> features, std::size_t dim,
                                       std::size_t k, double threshold, std::size_t* isolated = nullptr) {
  const std::size_t s = level.size();
  if (features.size() != s * dim) fail(ErrorCode::ShapeMismatch, "features are not row-aligned with level nodes");
  std::vector<Edge> out = level.edges_sparse;
  const std::size_t kk = std::min(k, s > 0 ? s - 1 : 0);
  if (kk > 0) {
    std::vector<Edge> dense;
    for (const auto& [q, r] : knn_edges(std::span<const Vec3>(level.positions), kk)) {
      dense.emplace_back(std::min(q, r), std::max(q, r));
    }
    std::sort(dense.begin(), dense.end());
    dense.erase(std::unique(dense.begin(), dense.end()), dense.end());
    for (const Edge& e : dense) {
      if (std::binary_search(level.edges_sparse.begin(), level.edges_sparse.end(), e)) continue;
      const double sim = cosine_similarity(features.subspan(e.first * dim, dim), features.subspan(e.second * dim, dim));
      if (sim >= threshold) out.push_back(e);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  if (isolated) {
    std::vector<char> touched(s, 0);
    for (const Edge& e : out) touched[e.first] = touched[e.second] = 1;
    *isolated = static_cast<std::size_t>(std::count(touched.begin(), touched.end(), 0));
  }
  return out;
}

/// Directed edges from each survivor to its k nearest previous-level nodes,
/// the survivor's own parent instance included.
inline std::vector<DirectedEdge> hierarchical_edges(const LevelGraph& level, std::span<const Vec3> parent_positions,
                                                    std::size_t k) {
  return knn_edges(std::span<const Vec3>(level.positions), parent_positions, k);
}

}  // namespace lmseg
