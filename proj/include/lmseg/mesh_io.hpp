// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Triangle mesh container plus OBJ/PLY readers and a PLY writer.
//
// Colors are held per face in HSV, each channel in [0,1]. Texture atlases are
// never sampled: a mesh either carries per-face colors (PLY face red/green/blue),
// per-vertex colors that get averaged over each face, or no color at all.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lmseg/error.hpp"

namespace lmseg {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Faces with area below this (squared units) count as degenerate.
inline constexpr double kDegenerateArea = 1e-12;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::optional<std::vector<Vec3>> face_colors;  // HSV in [0,1]^3
  std::optional<std::vector<int>> face_labels;

  std::size_t num_faces() const { return faces.size(); }
  std::size_t num_vertices() const { return vertices.size(); }
};

enum class MeshFormat { Obj, Ply, Auto };

struct LoadStats {
  std::size_t dropped_degenerate = 0;
};

// ---------------------------------------------------------------------------
// Color conversion

/// Hexcone RGB -> HSV with hue scaled to [0,1). Achromatic inputs get hue 0.
inline Vec3 rgb_to_hsv(const Vec3& rgb) {
  for (int c = 0; c < 3; ++c) {
    if (!(rgb[c] >= 0.0 && rgb[c] <= 1.0)) {
      fail(ErrorCode::OutOfRange, "rgb component outside [0,1]");
    }
  }
  const double r = rgb[0], g = rgb[1], b = rgb[2];
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = (g - b) / delta;
      if (h < 0.0) h += 6.0;
    } else if (mx == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h /= 6.0;
    if (h >= 1.0) h -= 1.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

inline Vec3 hsv_to_rgb(const Vec3& hsv) {
  const double h = hsv[0] * 6.0, s = hsv[1], v = hsv[2];
  const int sector = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// ---------------------------------------------------------------------------
// Per-face attributes

inline void check_face_index(const TriMesh& mesh, std::size_t face_index) {
  if (face_index >= mesh.faces.size()) {
    fail(ErrorCode::IndexOutOfRange, "face index " + std::to_string(face_index));
  }
}

inline Vec3 face_cross(const TriMesh& mesh, std::size_t face_index) {
  const Face& f = mesh.faces[face_index];
  const Vec3& a = mesh.vertices[f[0]];
  return (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a);
}

inline double face_area(const TriMesh& mesh, std::size_t face_index) {
  check_face_index(mesh, face_index);
  return 0.5 * face_cross(mesh, face_index).norm();
}

inline Vec3 face_normal(const TriMesh& mesh, std::size_t face_index) {
  check_face_index(mesh, face_index);
  const Vec3 n = face_cross(mesh, face_index);
  const double len = n.norm();
  if (0.5 * len < kDegenerateArea) {
    fail(ErrorCode::DegenerateFace, "face " + std::to_string(face_index) + " has near-zero area");
  }
  return n / len;
}

inline Vec3 face_barycenter(const TriMesh& mesh, std::size_t face_index) {
  check_face_index(mesh, face_index);
  const Face& f = mesh.faces[face_index];
  return (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
}

inline void check_vertex_indices(const TriMesh& mesh) {
  const std::size_t nv = mesh.vertices.size();
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    for (auto v : mesh.faces[i]) {
      if (v >= nv) {
        fail(ErrorCode::ParseError, "face " + std::to_string(i) + " references vertex " +
                                        std::to_string(v) + " of " + std::to_string(nv));
      }
    }
  }
}

/// Throws ParseError when a structural invariant does not hold.
inline void validate_mesh(const TriMesh& mesh) {
  check_vertex_indices(mesh);
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const Face& f = mesh.faces[i];
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      fail(ErrorCode::ParseError, "face " + std::to_string(i) + " repeats a vertex index");
    }
  }
  if (mesh.face_colors && mesh.face_colors->size() != mesh.faces.size()) {
    fail(ErrorCode::ParseError, "face color count does not match face count");
  }
  if (mesh.face_labels && mesh.face_labels->size() != mesh.faces.size()) {
    fail(ErrorCode::ParseError, "face label count does not match face count");
  }
}

namespace detail {

// Drops faces below the area threshold (including faces that repeat an index)
// along with their colors and labels.
inline std::size_t drop_degenerate_faces(TriMesh& mesh) {
  std::size_t kept = 0;
  const std::size_t n = mesh.faces.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Face& f = mesh.faces[i];
    bool ok = f[0] != f[1] && f[1] != f[2] && f[0] != f[2];
    if (ok) ok = 0.5 * face_cross(mesh, i).norm() >= kDegenerateArea;
    if (!ok) continue;
    mesh.faces[kept] = mesh.faces[i];
    if (mesh.face_colors) (*mesh.face_colors)[kept] = (*mesh.face_colors)[i];
    if (mesh.face_labels) (*mesh.face_labels)[kept] = (*mesh.face_labels)[i];
    ++kept;
  }
  mesh.faces.resize(kept);
  if (mesh.face_colors) mesh.face_colors->resize(kept);
  if (mesh.face_labels) mesh.face_labels->resize(kept);
  return n - kept;
}

inline std::vector<Vec3> average_vertex_colors(const TriMesh& mesh, const std::vector<Vec3>& rgb) {
  std::vector<Vec3> out;
  out.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    Vec3 c = (rgb[f[0]] + rgb[f[1]] + rgb[f[2]]) / 3.0;
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k], 0.0, 1.0);
    out.push_back(rgb_to_hsv(c));
  }
  return out;
}

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// ---------------------------------------------------------------------------
// OBJ

inline long parse_obj_index(const std::string& token, std::size_t vertex_count, std::size_t line_no) {
  const std::string head = token.substr(0, token.find('/'));
  long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stol(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad face index '" + token + "'");
  }
  if (idx < 0) idx = static_cast<long>(vertex_count) + idx + 1;  // relative index
  if (idx < 1 || static_cast<std::size_t>(idx) > vertex_count) {
    fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": face index " + head +
                                    " out of range (" + std::to_string(vertex_count) + " vertices)");
  }
  return idx - 1;
}

inline TriMesh read_obj(std::istream& in) {
  TriMesh mesh;
  std::vector<Vec3> colors;
  bool all_colored = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::vector<double> vals;
      double x;
      while (ls >> x) vals.push_back(x);
      if (!ls.eof() || (vals.size() != 3 && vals.size() != 4 && vals.size() != 6 && vals.size() != 7)) {
        fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": malformed vertex");
      }
      mesh.vertices.emplace_back(vals[0], vals[1], vals[2]);
      if (vals.size() >= 6) {
        const std::size_t o = vals.size() - 3;
        colors.emplace_back(vals[o], vals[o + 1], vals[o + 2]);
      } else {
        all_colored = false;
        colors.emplace_back(0.0, 0.0, 0.0);
      }
    } else if (tag == "f") {
      std::vector<std::string> toks;
      std::string t;
      while (ls >> t) toks.push_back(t);
      if (toks.size() != 3) {
        fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": only triangular faces are supported");
      }
      Face f{};
      for (int k = 0; k < 3; ++k) {
        f[k] = static_cast<std::uint32_t>(parse_obj_index(toks[k], mesh.vertices.size(), line_no));
      }
      mesh.faces.push_back(f);
    }
    // vt, vn, o, g, s, usemtl, mtllib: ignored
  }
  if (all_colored && !mesh.vertices.empty() && !mesh.faces.empty()) {
    for (const Vec3& c : colors) {
      for (int k = 0; k < 3; ++k) {
        if (!(c[k] >= 0.0 && c[k] <= 1.0)) fail(ErrorCode::ParseError, "vertex color outside [0,1]");
      }
    }
    mesh.face_colors = average_vertex_colors(mesh, colors);
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline PlyType parse_ply_type(const std::string& name) {
  const std::string n = lowercase(name);
  if (n == "char" || n == "int8") return PlyType::Int8;
  if (n == "uchar" || n == "uint8") return PlyType::UInt8;
  if (n == "short" || n == "int16") return PlyType::Int16;
  if (n == "ushort" || n == "uint16") return PlyType::UInt16;
  if (n == "int" || n == "int32") return PlyType::Int32;
  if (n == "uint" || n == "uint32") return PlyType::UInt32;
  if (n == "float" || n == "float32") return PlyType::Float32;
  if (n == "double" || n == "float64") return PlyType::Float64;
  fail(ErrorCode::ParseError, "unknown PLY type '" + name + "'");
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

template <class U>
U load_le(const char* p) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(U));
  }
  return v;
}

class PlyReader {
 public:
  PlyReader(std::istream& in, bool binary) : in_(in), binary_(binary) {}

  double read(PlyType t) {
    if (!binary_) {
      std::string tok;
      if (!(in_ >> tok)) fail(ErrorCode::ParseError, "unexpected end of PLY data");
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
      } catch (const std::exception&) {
        fail(ErrorCode::ParseError, "bad PLY value '" + tok + "'");
      }
    }
    char buf[8];
    const std::size_t n = ply_type_size(t);
    if (!in_.read(buf, static_cast<std::streamsize>(n))) fail(ErrorCode::ParseError, "unexpected end of PLY data");
    switch (t) {
      case PlyType::Int8: return load_le<std::int8_t>(buf);
      case PlyType::UInt8: return load_le<std::uint8_t>(buf);
      case PlyType::Int16: return load_le<std::int16_t>(buf);
      case PlyType::UInt16: return load_le<std::uint16_t>(buf);
      case PlyType::Int32: return load_le<std::int32_t>(buf);
      case PlyType::UInt32: return load_le<std::uint32_t>(buf);
      case PlyType::Float32: return load_le<float>(buf);
      case PlyType::Float64: return load_le<double>(buf);
    }
    return 0.0;
  }

 private:
  std::istream& in_;
  bool binary_;
};

inline double color_channel(double raw, PlyType t) {
  if (t == PlyType::Float32 || t == PlyType::Float64) return raw;
  return raw / 255.0;
}

inline TriMesh read_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) fail(ErrorCode::ParseError, "missing 'ply' magic");
  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  while (true) {
    if (!std::getline(in, line)) fail(ErrorCode::ParseError, "unterminated PLY header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        fail(ErrorCode::UnsupportedFormat, "PLY format '" + fmt + "'");
      }
      have_format = true;
    } else if (kw == "element") {
      PlyElement e;
      if (!(ls >> e.name >> e.count)) fail(ErrorCode::ParseError, "bad element line");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) fail(ErrorCode::ParseError, "property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        if (!(ls >> ct >> it >> p.name)) fail(ErrorCode::ParseError, "bad list property");
        p.is_list = true;
        p.count_type = parse_ply_type(ct);
        p.type = parse_ply_type(it);
      } else {
        p.type = parse_ply_type(t);
        if (!(ls >> p.name)) fail(ErrorCode::ParseError, "bad property line");
      }
      elements.back().props.push_back(p);
    } else {
      fail(ErrorCode::ParseError, "unknown header keyword '" + kw + "'");
    }
  }
  if (!have_format) fail(ErrorCode::ParseError, "PLY header lacks a format line");

  TriMesh mesh;
  PlyReader reader(in, binary);
  std::vector<Vec3> vcolors;
  bool vertex_colors = false;
  std::vector<Vec3> fcolors;
  bool face_colors = false;
  std::vector<int> labels;
  bool face_labels = false;

  for (const PlyElement& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, ilist = -1, ilabel = -1;
    for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
      const std::string& n = e.props[k].name;
      if (n == "x") ix = k;
      else if (n == "y") iy = k;
      else if (n == "z") iz = k;
      else if (n == "red" || n == "r" || n == "diffuse_red") ir = k;
      else if (n == "green" || n == "g" || n == "diffuse_green") ig = k;
      else if (n == "blue" || n == "b" || n == "diffuse_blue") ib = k;
      else if (n == "vertex_indices" || n == "vertex_index") ilist = k;
      else if (n == "label" || n == "class") ilabel = k;
    }
    const bool has_rgb = ir >= 0 && ig >= 0 && ib >= 0;
    if (is_vertex) {
      if (ix < 0 || iy < 0 || iz < 0) fail(ErrorCode::ParseError, "vertex element lacks x/y/z");
      vertex_colors = has_rgb;
      mesh.vertices.reserve(e.count);
    }
    if (is_face) {
      if (ilist < 0) fail(ErrorCode::ParseError, "face element lacks vertex_indices");
      face_colors = has_rgb;
      face_labels = ilabel >= 0;
      mesh.faces.reserve(e.count);
    }
    std::vector<double> scalars(e.props.size(), 0.0);
    for (std::size_t row = 0; row < e.count; ++row) {
      Face f{};
      for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
        const PlyProperty& p = e.props[k];
        if (p.is_list) {
          const double cnt = reader.read(p.count_type);
          if (cnt < 0) fail(ErrorCode::ParseError, "negative list length");
          const auto n = static_cast<std::size_t>(cnt);
          if (is_face && k == ilist && n != 3) {
            fail(ErrorCode::ParseError, "face " + std::to_string(row) + " is not a triangle");
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double v = reader.read(p.type);
            if (is_face && k == ilist) {
              if (v < 0) fail(ErrorCode::ParseError, "negative vertex index");
              f[j] = static_cast<std::uint32_t>(v);
            }
          }
        } else {
          scalars[k] = reader.read(p.type);
        }
      }
      if (is_vertex) {
        mesh.vertices.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
        if (has_rgb) {
          vcolors.emplace_back(color_channel(scalars[ir], e.props[ir].type),
                               color_channel(scalars[ig], e.props[ig].type),
                               color_channel(scalars[ib], e.props[ib].type));
        }
      } else if (is_face) {
        mesh.faces.push_back(f);
        if (has_rgb) {
          const Vec3 rgb(color_channel(scalars[ir], e.props[ir].type),
                         color_channel(scalars[ig], e.props[ig].type),
                         color_channel(scalars[ib], e.props[ib].type));
          try {
            fcolors.push_back(rgb_to_hsv(rgb));
          } catch (const Error&) {
            fail(ErrorCode::ParseError, "face color outside [0,1]");
          }
        }
        if (face_labels) labels.push_back(static_cast<int>(scalars[ilabel]));
      }
    }
  }
  check_vertex_indices(mesh);
  if (face_colors) {
    mesh.face_colors = std::move(fcolors);
  } else if (vertex_colors && !mesh.faces.empty()) {
    try {
      mesh.face_colors = average_vertex_colors(mesh, vcolors);
    } catch (const Error&) {
      fail(ErrorCode::ParseError, "vertex color outside [0,1]");
    }
  }
  if (face_labels) mesh.face_labels = std::move(labels);
  return mesh;
}

}  // namespace detail

inline MeshFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = detail::lowercase(path.extension().string());
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  fail(ErrorCode::UnsupportedFormat, "cannot infer mesh format from '" + path.string() + "'");
}

inline TriMesh read_mesh(std::istream& in, MeshFormat format, LoadStats* stats = nullptr) {
  if (format == MeshFormat::Auto) fail(ErrorCode::UnsupportedFormat, "stream input needs an explicit format");
  TriMesh mesh = format == MeshFormat::Obj ? detail::read_obj(in) : detail::read_ply(in);
  check_vertex_indices(mesh);
  const std::size_t dropped = detail::drop_degenerate_faces(mesh);
  validate_mesh(mesh);
  if (stats) stats->dropped_degenerate = dropped;
  if (mesh.faces.empty()) fail(ErrorCode::EmptyMesh, "mesh has no valid faces");
  return mesh;
}

/// Reads an OBJ or PLY file. Degenerate faces are dropped and counted in `stats`.
inline TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format = MeshFormat::Auto,
                         LoadStats* stats = nullptr) {
  if (format == MeshFormat::Auto) format = format_from_path(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  return read_mesh(in, format, stats);
}

struct PlyWriteOptions {
  bool binary = true;
  /// Extra per-face float property written as `confidence` when non-empty.
  std::vector<float> face_confidence;
};

/// Writes a PLY with double-precision vertex coordinates, optional uchar face
/// colors (quantized from HSV) and an optional int `label` face property.
inline void write_ply(std::ostream& out, const TriMesh& mesh, const PlyWriteOptions& opts = {}) {
  const bool colors = mesh.face_colors.has_value();
  const bool labels = mesh.face_labels.has_value();
  const bool conf = !opts.face_confidence.empty();
  if (conf && opts.face_confidence.size() != mesh.faces.size()) {
    fail(ErrorCode::LengthMismatch, "confidence count does not match face count");
  }
  out << "ply\nformat " << (opts.binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.faces.size() << "\n";
  out << "property list uchar uint vertex_indices\n";
  if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (labels) out << "property int label\n";
  if (conf) out << "property float confidence\n";
  out << "end_header\n";

  auto put = [&out](auto v) {
    if constexpr (std::endian::native == std::endian::big && sizeof(v) > 1) {
      auto* b = reinterpret_cast<unsigned char*>(&v);
      std::reverse(b, b + sizeof(v));
    }
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  auto quant = [](double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };

  if (opts.binary) {
    for (const Vec3& v : mesh.vertices) {
      put(v[0]);
      put(v[1]);
      put(v[2]);
    }
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
      put(std::uint8_t{3});
      for (auto idx : mesh.faces[i]) put(static_cast<std::uint32_t>(idx));
      if (colors) {
        const Vec3 rgb = hsv_to_rgb((*mesh.face_colors)[i]);
        put(quant(rgb[0]));
        put(quant(rgb[1]));
        put(quant(rgb[2]));
      }
      if (labels) put(static_cast<std::int32_t>((*mesh.face_labels)[i]));
      if (conf) put(opts.face_confidence[i]);
    }
  } else {
    out.precision(17);
    for (const Vec3& v : mesh.vertices) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    out.precision(9);
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
      const Face& f = mesh.faces[i];
      out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2];
      if (colors) {
        const Vec3 rgb = hsv_to_rgb((*mesh.face_colors)[i]);
        out << ' ' << int(quant(rgb[0])) << ' ' << int(quant(rgb[1])) << ' ' << int(quant(rgb[2]));
      }
      if (labels) out << ' ' << (*mesh.face_labels)[i];
      if (conf) out << ' ' << opts.face_confidence[i];
      out << '\n';
    }
  }
  if (!out) fail(ErrorCode::IoError, "failed writing PLY");
}

inline void save_ply(const std::filesystem::path& path, const TriMesh& mesh, const PlyWriteOptions& opts = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  write_ply(out, mesh, opts);
}

}  // namespace lmseg
