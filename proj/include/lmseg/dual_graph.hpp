// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Barycentric dual of a triangle mesh: one node per face at its barycenter,
// one undirected edge per pair of faces sharing a primal edge.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lmseg/error.hpp"
#include "lmseg/mesh_io.hpp"

namespace lmseg {

/// Undirected edge stored canonically as (first < second).
using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Which feature blocks a graph carries. Column order is always [H,S,V, nx,ny,nz].
struct FeatureSpec {
  bool use_hsv = true;
  bool use_normals = true;

  int channels() const { return (use_hsv ? 3 : 0) + (use_normals ? 3 : 0); }
  std::uint32_t bits() const { return (use_hsv ? 1u : 0u) | (use_normals ? 2u : 0u); }
  static FeatureSpec from_bits(std::uint32_t b) { return {(b & 1u) != 0, (b & 2u) != 0}; }
  /// Column of the first normal channel, or -1.
  int normal_offset() const { return use_normals ? (use_hsv ? 3 : 0) : -1; }
  bool operator==(const FeatureSpec&) const = default;
};

struct DualGraph {
  std::vector<Vec3> positions;
  std::vector<double> features;  // row-major N x channels
  int channels = 0;
  std::vector<Edge> edges;
  std::optional<std::vector<int>> labels;
  FeatureSpec feature_spec;
  bool hsv_zero_filled = false;

  // Maps graph-space positions back to source coordinates: p / scale + center.
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  std::size_t num_nodes() const { return positions.size(); }
  const double* feature_row(std::size_t i) const { return features.data() + i * static_cast<std::size_t>(channels); }
  Vec3 original_position(std::size_t i) const { return positions[i] / scale + center; }
};

struct AdjacencyStats {
  std::size_t non_manifold_edges = 0;
};

namespace detail {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace detail

/// Face pairs that share exactly one primal edge, canonical and sorted.
/// Primal edges used by more than two faces emit every pairing and are counted.
inline std::vector<Edge> face_adjacency(const TriMesh& mesh, AdjacencyStats* stats = nullptr) {
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> by_edge;
  by_edge.reserve(mesh.faces.size() * 2);
  for (std::uint32_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const Face& f = mesh.faces[fi];
    for (int k = 0; k < 3; ++k) {
      by_edge[detail::edge_key(f[k], f[(k + 1) % 3])].push_back(fi);
    }
  }
  std::vector<Edge> pairs;
  pairs.reserve(mesh.faces.size() * 3 / 2);
  std::size_t non_manifold = 0;
  for (auto& [key, faces] : by_edge) {
    if (faces.size() > 2) ++non_manifold;
    for (std::size_t a = 0; a < faces.size(); ++a) {
      for (std::size_t b = a + 1; b < faces.size(); ++b) {
        if (faces[a] == faces[b]) continue;
        pairs.emplace_back(std::min(faces[a], faces[b]), std::max(faces[a], faces[b]));
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  // A pair listed once shares one primal edge; duplicates share two or more.
  std::vector<Edge> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i;
    while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
    if (j - i == 1) out.push_back(pairs[i]);
    i = j;
  }
  if (stats) stats->non_manifold_edges = non_manifold;
  return out;
}

struct BuildStats {
  AdjacencyStats adjacency;
  bool hsv_zero_filled = false;
};

/// Builds the dual graph in source coordinates. Call normalize_scale before learning.
inline DualGraph build_dual(const TriMesh& mesh, const FeatureSpec& spec, BuildStats* stats = nullptr) {
  if (!spec.use_hsv && !spec.use_normals) {
    fail(ErrorCode::InvalidFeatureSpec, "at least one of hsv/normals must be enabled");
  }
  if (mesh.faces.empty()) fail(ErrorCode::EmptyMesh, "mesh has no faces");
  validate_mesh(mesh);

  DualGraph g;
  g.feature_spec = spec;
  g.channels = spec.channels();
  const std::size_t n = mesh.faces.size();
  g.positions.resize(n);
  g.features.assign(n * g.channels, 0.0);
  g.hsv_zero_filled = spec.use_hsv && !mesh.face_colors.has_value();

  const int noff = spec.normal_offset();
  for (std::size_t i = 0; i < n; ++i) {
    g.positions[i] = face_barycenter(mesh, i);
    double* row = g.features.data() + i * g.channels;
    if (spec.use_hsv && mesh.face_colors) {
      const Vec3& c = (*mesh.face_colors)[i];
      row[0] = c[0];
      row[1] = c[1];
      row[2] = c[2];
    }
    if (noff >= 0) {
      const Vec3 nrm = face_normal(mesh, i);
      row[noff] = nrm[0];
      row[noff + 1] = nrm[1];
      row[noff + 2] = nrm[2];
    }
  }
  AdjacencyStats adj;
  g.edges = face_adjacency(mesh, &adj);
  if (mesh.face_labels) g.labels = *mesh.face_labels;
  if (stats) {
    stats->adjacency = adj;
    stats->hsv_zero_filled = g.hsv_zero_filled;
  }
  return g;
}

/// Centers positions on their centroid and divides by the largest absolute
/// coordinate so every component lies in [-1, 1]. Features are untouched.
inline DualGraph normalize_scale(DualGraph g) {
  if (g.positions.empty()) return g;
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : g.positions) centroid += p;
  centroid /= static_cast<double>(g.positions.size());
  double max_abs = 0.0;
  for (Vec3& p : g.positions) {
    p -= centroid;
    max_abs = std::max(max_abs, p.cwiseAbs().maxCoeff());
  }
  const double s = max_abs > 0.0 ? 1.0 / max_abs : 1.0;
  for (Vec3& p : g.positions) p *= s;
  g.center += centroid / g.scale;
  g.scale *= s;
  return g;
}

inline std::vector<std::size_t> degree_histogram(const DualGraph& g) {
  std::vector<std::size_t> degree(g.num_nodes(), 0);
  for (const Edge& e : g.edges) {
    ++degree[e.first];
    ++degree[e.second];
  }
  std::vector<std::size_t> hist;
  for (std::size_t d : degree) {
    if (d >= hist.size()) hist.resize(d + 1, 0);
    ++hist[d];
  }
  return hist;
}

// ---------------------------------------------------------------------------
// .bdg binary graph format (little-endian)
//
//   char[4]  "BDG1"
//   u32      N, C, edge count, flags
//              flags bit0 hsv, bit1 normals, bit2 labels present, bit3 hsv zero-filled
//   f64[3]   center, f64 scale      (graph space -> source coordinates)
//   f32      positions N x 3, features N x C
//   u32      edges E x 2
//   u16      labels N               (when bit2 set)

inline constexpr std::uint32_t kBdgHasLabels = 4u;
inline constexpr std::uint32_t kBdgHsvZeroFilled = 8u;

namespace detail {

template <class U>
void put_le(std::ostream& out, U v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(U));
  }
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  char buf[sizeof(U)];
  if (!in.read(buf, sizeof(U))) fail(ErrorCode::ParseError, "truncated binary stream");
  return load_le<U>(buf);
}

}  // namespace detail

inline void write_bdg(std::ostream& out, const DualGraph& g) {
  out.write("BDG1", 4);
  std::uint32_t flags = g.feature_spec.bits();
  if (g.labels) flags |= kBdgHasLabels;
  if (g.hsv_zero_filled) flags |= kBdgHsvZeroFilled;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.num_nodes()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.channels));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.edges.size()));
  detail::put_le<std::uint32_t>(out, flags);
  for (int k = 0; k < 3; ++k) detail::put_le<double>(out, g.center[k]);
  detail::put_le<double>(out, g.scale);
  for (const Vec3& p : g.positions) {
    for (int k = 0; k < 3; ++k) detail::put_le<float>(out, static_cast<float>(p[k]));
  }
  for (double f : g.features) detail::put_le<float>(out, static_cast<float>(f));
  for (const Edge& e : g.edges) {
    detail::put_le<std::uint32_t>(out, e.first);
    detail::put_le<std::uint32_t>(out, e.second);
  }
  if (g.labels) {
    for (int l : *g.labels) {
      if (l < 0 || l > 0xFFFF) fail(ErrorCode::InvalidLabel, "label does not fit u16");
      detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(l));
    }
  }
  if (!out) fail(ErrorCode::IoError, "failed writing .bdg");
}

inline DualGraph read_bdg(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "BDG1", 4) != 0) fail(ErrorCode::ParseError, "bad .bdg magic");
  DualGraph g;
  const auto n = detail::get_le<std::uint32_t>(in);
  const auto c = detail::get_le<std::uint32_t>(in);
  const auto ne = detail::get_le<std::uint32_t>(in);
  const auto flags = detail::get_le<std::uint32_t>(in);
  g.feature_spec = FeatureSpec::from_bits(flags);
  g.channels = static_cast<int>(c);
  if (g.feature_spec.channels() != g.channels) fail(ErrorCode::ParseError, ".bdg channel count disagrees with flags");
  g.hsv_zero_filled = (flags & kBdgHsvZeroFilled) != 0;
  for (int k = 0; k < 3; ++k) g.center[k] = detail::get_le<double>(in);
  g.scale = detail::get_le<double>(in);
  g.positions.resize(n);
  for (auto& p : g.positions) {
    for (int k = 0; k < 3; ++k) p[k] = detail::get_le<float>(in);
  }
  g.features.resize(static_cast<std::size_t>(n) * c);
  for (auto& f : g.features) f = detail::get_le<float>(in);
  g.edges.resize(ne);
  for (auto& e : g.edges) {
    e.first = detail::get_le<std::uint32_t>(in);
    e.second = detail::get_le<std::uint32_t>(in);
    if (e.first >= e.second || e.second >= n) fail(ErrorCode::ParseError, ".bdg edge not canonical or out of range");
  }
  if (flags & kBdgHasLabels) {
    std::vector<int> labels(n);
    for (auto& l : labels) l = detail::get_le<std::uint16_t>(in);
    g.labels = std::move(labels);
  }
  return g;
}

inline void save_bdg(const std::filesystem::path& path, const DualGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  write_bdg(out, g);
}

inline DualGraph load_bdg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  return read_bdg(in);
}

}  // namespace lmseg
