// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact k-nearest-neighbor search over 3D points with a static kd-tree.
// Neighbors are ordered by (squared distance, index), so equal distances
// resolve to the lower index.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace lmseg {

struct Neighbor {
  double dist2 = 0.0;
  std::uint32_t index = 0;

  bool operator<(const Neighbor& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index); }
};

inline double squared_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

class KdTree {
 public:
  static constexpr std::size_t kLeafSize = 12;

  explicit KdTree(std::span<const Eigen::Vector3d> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, static_cast<std::uint32_t>(points_.size()));
    }
  }

  std::size_t size() const { return points_.size(); }

  /// The k nearest points to `query`, ascending by (distance, index).
  /// Passing `exclude` skips that point index (self-queries).
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k,
                            std::uint32_t exclude = std::numeric_limits<std::uint32_t>::max()) const {
    std::vector<Neighbor> heap;  // max-heap on (dist2, index)
    if (k == 0 || nodes_.empty()) return heap;
    heap.reserve(k + 1);
    search(0, query, k, exclude, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;  // bounding box
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = node.hi = points_[order_[begin]];
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      node.lo = node.lo.cwiseMin(points_[order_[i]]);
      node.hi = node.hi.cwiseMax(points_[order_[i]]);
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin > kLeafSize) {
      int axis = 0;
      (node.hi - node.lo).maxCoeff(&axis);
      const std::uint32_t mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                       [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
      const std::int32_t l = build(begin, mid);
      const std::int32_t r = build(mid, end);
      nodes_[id].left = l;
      nodes_[id].right = r;
    }
    return id;
  }

  static double box_distance2(const Node& n, const Eigen::Vector3d& q) {
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
      double t = 0.0;
      if (q[k] < n.lo[k]) t = n.lo[k] - q[k];
      else if (q[k] > n.hi[k]) t = q[k] - n.hi[k];
      d += t * t;
    }
    return d;
  }

  void search(std::int32_t id, const Eigen::Vector3d& q, std::size_t k, std::uint32_t exclude,
              std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    // Strict comparison keeps equal-distance subtrees reachable for the index tie-break.
    if (heap.size() == k && box_distance2(n, q) > heap.front().dist2) return;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t idx = order_[i];
        if (idx == exclude) continue;
        const Neighbor cand{squared_distance(q, points_[idx]), idx};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[n.left], q);
    const double dr = box_distance2(nodes_[n.right], q);
    if (dl <= dr) {
      search(n.left, q, k, exclude, heap);
      search(n.right, q, k, exclude, heap);
    } else {
      search(n.right, q, k, exclude, heap);
      search(n.left, q, k, exclude, heap);
    }
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace lmseg
