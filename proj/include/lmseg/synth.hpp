// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Procedural terrain tiles for smoke tests and the toy segmentation task:
// a Delaunay-triangulated jittered grid draped over gently rolling ground,
// with narrow wall-like ridges whose faces carry label 1.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "lmseg/error.hpp"
#include "lmseg/mesh_io.hpp"
#include "lmseg/seed.hpp"

namespace lmseg {

/// Delaunay triangulation of 2D points (x, y of each input) by Bowyer-Watson.
/// Triangles are counter-clockwise. O(n^2) worst case; fine for tile sizes.
inline std::vector<Face> delaunay_2d(std::span<const Vec3> pts) {
  const std::size_t n = pts.size();
  if (n < 3) fail(ErrorCode::EmptyMesh, "triangulation needs at least three points");
  double minx = pts[0][0], maxx = minx, miny = pts[0][1], maxy = miny;
  for (const Vec3& p : pts) {
    minx = std::min(minx, p[0]);
    maxx = std::max(maxx, p[0]);
    miny = std::min(miny, p[1]);
    maxy = std::max(maxy, p[1]);
  }
  const double span = std::max({maxx - minx, maxy - miny, 1e-9});
  const double cx = 0.5 * (minx + maxx), cy = 0.5 * (miny + maxy);
  std::vector<std::array<double, 2>> v(n + 3);
  for (std::size_t i = 0; i < n; ++i) v[i] = {pts[i][0], pts[i][1]};
  v[n] = {cx - 20.0 * span, cy - 10.0 * span};
  v[n + 1] = {cx + 20.0 * span, cy - 10.0 * span};
  v[n + 2] = {cx, cy + 20.0 * span};

  struct Tri {
    std::uint32_t a, b, c;
    double ox, oy, r2;
  };
  auto make = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    const auto& pa = v[a];
    const auto& pb = v[b];
    const auto& pc = v[c];
    const double cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0]);
    if (cross < 0.0) std::swap(b, c);
    const auto& qa = v[a];
    const auto& qb = v[b];
    const auto& qc = v[c];
    const double d = 2.0 * (qa[0] * (qb[1] - qc[1]) + qb[0] * (qc[1] - qa[1]) + qc[0] * (qa[1] - qb[1]));
    const double a2 = qa[0] * qa[0] + qa[1] * qa[1];
    const double b2 = qb[0] * qb[0] + qb[1] * qb[1];
    const double c2 = qc[0] * qc[0] + qc[1] * qc[1];
    const double ox = (a2 * (qb[1] - qc[1]) + b2 * (qc[1] - qa[1]) + c2 * (qa[1] - qb[1])) / d;
    const double oy = (a2 * (qc[0] - qb[0]) + b2 * (qa[0] - qc[0]) + c2 * (qb[0] - qa[0])) / d;
    const double r2 = (qa[0] - ox) * (qa[0] - ox) + (qa[1] - oy) * (qa[1] - oy);
    return Tri{a, b, c, ox, oy, r2};
  };

  std::vector<Tri> tris{make(static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n + 1), static_cast<std::uint32_t>(n + 2))};
  std::vector<std::pair<std::uint32_t, std::uint32_t>> boundary;
  std::unordered_map<std::uint64_t, int> edge_count;
  for (std::uint32_t i = 0; i < n; ++i) {
    const double px = v[i][0], py = v[i][1];
    boundary.clear();
    edge_count.clear();
    std::vector<Tri> keep;
    keep.reserve(tris.size() + 2);
    std::vector<Tri> bad;
    for (const Tri& t : tris) {
      const double dx = px - t.ox, dy = py - t.oy;
      if (dx * dx + dy * dy < t.r2) bad.push_back(t);
      else keep.push_back(t);
    }
    auto key = [](std::uint32_t a, std::uint32_t b) {
      return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
    };
    for (const Tri& t : bad) {
      ++edge_count[key(t.a, t.b)];
      ++edge_count[key(t.b, t.c)];
      ++edge_count[key(t.c, t.a)];
    }
    for (const Tri& t : bad) {
      for (const auto& [a, b] : {std::pair{t.a, t.b}, std::pair{t.b, t.c}, std::pair{t.c, t.a}}) {
        if (edge_count[key(a, b)] == 1) keep.push_back(make(a, b, i));
      }
    }
    tris = std::move(keep);
  }
  std::vector<Face> out;
  out.reserve(tris.size());
  for (const Tri& t : tris) {
    if (t.a >= n || t.b >= n || t.c >= n) continue;
    out.push_back({t.a, t.b, t.c});
  }
  return out;
}

struct SynthConfig {
  int grid_min = 33;
  int grid_max = 45;
  double extent = 20.0;
  double undulation = 0.3;
  double noise = 0.03;
  double positive_min = 0.08;
  double positive_max = 0.18;
  int max_ridges = 8;
};

namespace detail {

struct Ridge {
  Vec3 a, b;
  double height, half_width;
};

inline double segment_distance_xy(const Vec3& p, const Vec3& a, const Vec3& b) {
  const double ux = b[0] - a[0], uy = b[1] - a[1];
  const double len2 = ux * ux + uy * uy;
  double t = len2 > 0.0 ? ((p[0] - a[0]) * ux + (p[1] - a[1]) * uy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p[0] - (a[0] + t * ux), dy = p[1] - (a[1] + t * uy);
  return std::sqrt(dx * dx + dy * dy);
}

inline double bump(const Ridge& r, const Vec3& p) {
  const double d = segment_distance_xy(p, r.a, r.b) / r.half_width;
  return d >= 1.0 ? 0.0 : r.height * (1.0 - d * d);
}

}  // namespace detail

/// One labeled tile. HSV colors are weakly tied to the label.
inline TriMesh synth_tile(std::uint64_t seed, const SynthConfig& cfg = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const int g = std::uniform_int_distribution<int>(cfg.grid_min, cfg.grid_max)(rng);
  const double h = cfg.extent / (g - 1);
  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(g) * g);
  for (int iy = 0; iy < g; ++iy) {
    for (int ix = 0; ix < g; ++ix) {
      mesh.vertices.emplace_back((ix + uni(-0.3, 0.3)) * h, (iy + uni(-0.3, 0.3)) * h, 0.0);
    }
  }
  mesh.faces = delaunay_2d(mesh.vertices);

  const double fx = uni(0.15, 0.35), fy = uni(0.15, 0.35), p1 = uni(0.0, 6.283), p2 = uni(0.0, 6.283);
  std::vector<double> ground(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    ground[i] = cfg.undulation * std::sin(fx * p[0] + p1) * std::cos(fy * p[1] + p2) + cfg.noise * uni(-1.0, 1.0);
  }

  const std::size_t nf = mesh.faces.size();
  std::vector<int> label(nf, 0);
  std::vector<double> lift(mesh.vertices.size(), 0.0);
  const double target = uni(cfg.positive_min, cfg.positive_max);
  std::size_t positives = 0;
  for (int k = 0; k < cfg.max_ridges && static_cast<double>(positives) < target * static_cast<double>(nf); ++k) {
    detail::Ridge r;
    const double len = uni(0.3, 0.7) * cfg.extent;
    const double ang = uni(0.0, 3.14159265358979);
    r.a = Vec3(uni(0.1, 0.9) * cfg.extent, uni(0.1, 0.9) * cfg.extent, 0.0);
    r.b = r.a + Vec3(len * std::cos(ang), len * std::sin(ang), 0.0);
    r.height = uni(0.5, 1.0);
    r.half_width = uni(1.0, 1.5) * h;
    std::vector<double> b(mesh.vertices.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = detail::bump(r, mesh.vertices[i]);
      lift[i] = std::max(lift[i], b[i]);
    }
    for (std::size_t f = 0; f < nf; ++f) {
      if (label[f]) continue;
      const Face& fc = mesh.faces[f];
      if ((b[fc[0]] + b[fc[1]] + b[fc[2]]) / 3.0 > 0.25 * r.height) {
        label[f] = 1;
        ++positives;
      }
    }
  }
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) mesh.vertices[i][2] = ground[i] + lift[i];

  std::vector<Vec3> colors(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    const double l = label[f];
    colors[f] = Vec3(std::clamp(0.25 - 0.05 * l + uni(-0.08, 0.08), 0.0, 1.0),
                     std::clamp(0.45 - 0.08 * l + uni(-0.15, 0.15), 0.0, 1.0),
                     std::clamp(0.50 + 0.08 * l + uni(-0.15, 0.15), 0.0, 1.0));
  }
  mesh.face_colors = std::move(colors);
  mesh.face_labels = std::move(label);
  return mesh;
}

inline std::vector<TriMesh> synth_dataset(std::size_t n_tiles, std::uint64_t seed, const SynthConfig& cfg = {}) {
  if (n_tiles == 0) fail(ErrorCode::InvalidConfig, "at least one tile is required");
  std::vector<TriMesh> out;
  out.reserve(n_tiles);
  for (std::size_t i = 0; i < n_tiles; ++i) out.push_back(synth_tile(derive_seed(seed, {i}), cfg));
  return out;
}

}  // namespace lmseg
