// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Geometry aggregation+ (GA+): relative-feature messages modulated by a
// sinusoidal embedding of the relative position, reduced per target node by
// max + mean + a learnable-temperature softmax aggregation.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lmseg/dual_graph.hpp"
#include "lmseg/error.hpp"
#include "lmseg/graph_pooling.hpp"
#include "lmseg/nn.hpp"
#include "lmseg/ops.hpp"

namespace lmseg {

using ad::Index;

/// Message routes: edge e carries source src[e] to target tgt[e].
struct EdgeList {
  std::vector<Index> src;
  std::vector<Index> tgt;

  std::size_t size() const { return src.size(); }

  /// Both directions of every undirected edge.
  static EdgeList bidirectional(std::span<const Edge> edges) {
    EdgeList out;
    out.src.reserve(2 * edges.size());
    out.tgt.reserve(2 * edges.size());
    for (const auto& [a, b] : edges) {
      out.src.push_back(a);
      out.tgt.push_back(b);
      out.src.push_back(b);
      out.tgt.push_back(a);
    }
    return out;
  }

  /// Hierarchical (survivor, parent) pairs: parents send to survivors.
  static EdgeList from_hierarchical(std::span<const DirectedEdge> edges) {
    EdgeList out;
    out.src.reserve(edges.size());
    out.tgt.reserve(edges.size());
    for (const auto& [q, r] : edges) {
      out.src.push_back(r);
      out.tgt.push_back(q);
    }
    return out;
  }
};

struct PEConfig {
  double alpha = 100.0;
  double beta = 1000.0;
  std::size_t dim = 32;
};

/// Channel layout of the embedding: the dim/2 sin/cos pairs are split over
/// three contiguous blocks (earlier blocks take the remainder), block b
/// embedding spatial component b with its own frequency ladder.
struct PELayout {
  std::size_t offset[3] = {0, 0, 0};
  std::size_t pairs[3] = {0, 0, 0};

  explicit PELayout(std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) fail(ErrorCode::InvalidConfig, "embedding width must be even and positive");
    const std::size_t p = dim / 2;
    std::size_t off = 0;
    for (std::size_t b = 0; b < 3; ++b) {
      pairs[b] = p / 3 + (b < p % 3 ? 1 : 0);
      offset[b] = off;
      off += 2 * pairs[b];
    }
  }
};

/// Frequency of pair c inside a block holding `pairs` pairs.
inline double pe_frequency(const PEConfig& cfg, std::size_t c, std::size_t pairs) {
  const double db = 2.0 * static_cast<double>(pairs);
  return cfg.alpha / std::pow(cfg.beta, 2.0 * static_cast<double>(c) / db);
}

/// Sinusoidal embedding of E x 3 relative positions into E x dim.
template <class T>
ad::Var<T> positional_embedding(const ad::Var<T>& v, const PEConfig& cfg) {
  if (v.cols() != 3) fail(ErrorCode::ShapeMismatch, "positional embedding expects 3-vectors");
  const PELayout layout(cfg.dim);
  std::vector<T> freq(cfg.dim / 2);
  std::vector<std::size_t> comp(cfg.dim / 2);
  for (std::size_t b = 0, k = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < layout.pairs[b]; ++c, ++k) {
      freq[k] = static_cast<T>(pe_frequency(cfg, c, layout.pairs[b]));
      comp[k] = b;
    }
  }
  const std::size_t e = v.rows();
  ad::Tensor<T> out(e, cfg.dim);
  for (std::size_t r = 0; r < e; ++r) {
    const T* vr = v.value().row(r);
    T* o = out.row(r);
    for (std::size_t k = 0; k < freq.size(); ++k) {
      const T a = freq[k] * vr[comp[k]];
      o[2 * k] = std::sin(a);
      o[2 * k + 1] = std::cos(a);
    }
  }
  return ad::make_result<T>(std::move(out), {v}, [freq, comp](ad::Node<T>& self) {
    ad::Tensor<T>* gv = ad::input_grad(self, 0);
    if (!gv) return;
    const std::size_t e = self.value.rows();
    for (std::size_t r = 0; r < e; ++r) {
      const T* y = self.value.row(r);
      const T* g = self.grad.row(r);
      T* d = gv->row(r);
      for (std::size_t k = 0; k < freq.size(); ++k) {
        // d sin(fx) = f cos(fx), d cos(fx) = -f sin(fx)
        d[comp[k]] += freq[k] * (g[2 * k] * y[2 * k + 1] - g[2 * k + 1] * y[2 * k]);
      }
    }
  });
}

/// Per-edge (x_src - x_tgt) divided per channel by (population std over all edges + eps).
template <class T>
ad::Var<T> relative_features(const ad::Var<T>& x_src, const ad::Var<T>& x_tgt, const EdgeList& edges, T eps = T(1e-5)) {
  if (x_src.cols() != x_tgt.cols()) fail(ErrorCode::ShapeMismatch, "source and target feature widths differ");
  return ad::std_normalize(ad::sub(ad::gather_rows(x_src, edges.src), ad::gather_rows(x_tgt, edges.tgt)), eps);
}

enum class AggMode { Combined, MaxMean, Softmax, Max, Mean };

inline AggMode agg_mode_from_string(const std::string& s) {
  if (s == "combined") return AggMode::Combined;
  if (s == "max_mean") return AggMode::MaxMean;
  if (s == "softmax") return AggMode::Softmax;
  if (s == "max") return AggMode::Max;
  if (s == "mean") return AggMode::Mean;
  fail(ErrorCode::InvalidConfig, "unknown aggregation '" + s + "'");
}

inline std::string to_string(AggMode m) {
  switch (m) {
    case AggMode::Combined: return "combined";
    case AggMode::MaxMean: return "max_mean";
    case AggMode::Softmax: return "softmax";
    case AggMode::Max: return "max";
    case AggMode::Mean: return "mean";
  }
  return "combined";
}

/// Per target and channel: sum over the group of softmax(t * h) * h.
template <class T>
ad::Var<T> softmax_aggregate(const ad::Var<T>& h, const std::vector<Index>& tgt, std::size_t n, const ad::Var<T>& t) {
  const ad::Var<T> w = ad::group_softmax(ad::scale_by(h, t), tgt, n);
  return ad::scatter_reduce(ad::mul(w, h), tgt, n, ad::Reduce::Sum);
}

template <class T>
ad::Var<T> combined_aggregate(const ad::Var<T>& h, const std::vector<Index>& tgt, std::size_t n, const ad::Var<T>& t,
                              AggMode mode = AggMode::Combined) {
  switch (mode) {
    case AggMode::Max: return ad::scatter_reduce(h, tgt, n, ad::Reduce::Max);
    case AggMode::Mean: return ad::scatter_reduce(h, tgt, n, ad::Reduce::Mean);
    case AggMode::Softmax: return softmax_aggregate(h, tgt, n, t);
    case AggMode::MaxMean:
      return ad::add(ad::scatter_reduce(h, tgt, n, ad::Reduce::Max), ad::scatter_reduce(h, tgt, n, ad::Reduce::Mean));
    case AggMode::Combined: break;
  }
  return ad::add(ad::add(ad::scatter_reduce(h, tgt, n, ad::Reduce::Max), ad::scatter_reduce(h, tgt, n, ad::Reduce::Mean)),
                 softmax_aggregate(h, tgt, n, t));
}

struct GAConfig {
  PEConfig pe;
  double eps = 1e-5;
  AggMode aggregation = AggMode::Combined;
  bool literal_pe = false;  // embed the absolute source position instead of the relative one
  nn::NormKind norm = nn::NormKind::Batch;
};

/// Node positions seen by one GA+ call. Source and target sets coincide for
/// self graphs and differ for hierarchical (parent -> survivor) edges.
struct GAGeometry {
  std::span<const Vec3> source;
  std::span<const Vec3> target;
  const EdgeList* edges = nullptr;
};

template <class T>
class GAPlus {
 public:
  GAPlus() = default;
  /// in: node feature width C; out: message width D (also the embedding width).
  GAPlus(nn::ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, GAConfig cfg)
      : cfg_(cfg), in_(in), out_(out) {
    cfg_.pe.dim = out;
    psi_ = nn::MLP<T>(store, name + ".psi", {3 + 2 * in, out}, cfg.norm);
    phi_ = nn::ResMLP<T>(store, name + ".phi", out, out, cfg.norm);
    t_ = &store.add(name + ".t", ad::Tensor<T>::scalar(T(1)));
  }

  /// h = psi(v_i, x_i, x_rel); returns phi(h * PE + PE) per edge.
  ad::Var<T> message(const GAGeometry& g, const ad::Var<T>& x_src, const ad::Var<T>& x_tgt, const nn::Context& ctx) const {
    const EdgeList& e = *g.edges;
    const ad::Var<T> x_rel = relative_features(x_src, x_tgt, e, static_cast<T>(cfg_.eps));
    ad::Tensor<T> vi(e.size(), 3), vrel(e.size(), 3);
    for (std::size_t k = 0; k < e.size(); ++k) {
      const Vec3& pi = g.target[e.tgt[k]];
      const Vec3& pj = g.source[e.src[k]];
      for (int c = 0; c < 3; ++c) {
        vi(k, c) = static_cast<T>(pi[c]);
        vrel(k, c) = static_cast<T>(cfg_.literal_pe ? pj[c] : pj[c] - pi[c]);
      }
    }
    const ad::Var<T> h = psi_(ad::concat_cols<T>({ad::constant(std::move(vi)), ad::gather_rows(x_tgt, e.tgt), x_rel}), ctx);
    const ad::Var<T> pe = positional_embedding(ad::constant(std::move(vrel)), cfg_.pe);
    return phi_(ad::add(ad::mul(h, pe), pe), ctx);
  }

  /// Target-node features, width out(). Targets without incoming edges get zeros.
  ad::Var<T> operator()(const GAGeometry& g, const ad::Var<T>& x_src, const ad::Var<T>& x_tgt, const nn::Context& ctx) const {
    if (x_src.rows() != g.source.size() || x_tgt.rows() != g.target.size()) {
      fail(ErrorCode::ShapeMismatch, "GA+ features are not aligned with positions");
    }
    if (x_src.cols() != in_ || x_tgt.cols() != in_) fail(ErrorCode::ShapeMismatch, "GA+ input width");
    if (g.edges->size() == 0) return ad::constant(ad::Tensor<T>(g.target.size(), out_));
    return combined_aggregate(message(g, x_src, x_tgt, ctx), g.edges->tgt, g.target.size(), t_->var, cfg_.aggregation);
  }

  nn::MLP<T>& psi() { return psi_; }
  nn::ResMLP<T>& phi() { return phi_; }
  nn::Parameter<T>& temperature() { return *t_; }
  const GAConfig& config() const { return cfg_; }
  std::size_t out() const { return out_; }

 private:
  GAConfig cfg_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  nn::MLP<T> psi_;
  nn::ResMLP<T> phi_;
  nn::Parameter<T>* t_ = nullptr;
};

}  // namespace lmseg
