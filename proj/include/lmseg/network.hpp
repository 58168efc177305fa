// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The encoder-decoder segmentation network over barycentric dual graphs.

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lmseg/dual_graph.hpp"
#include "lmseg/error.hpp"
#include "lmseg/ga_layers.hpp"
#include "lmseg/graph_pooling.hpp"
#include "lmseg/nn.hpp"
#include "lmseg/ops.hpp"
#include "lmseg/seed.hpp"
#include "lmseg/spatial_index.hpp"

namespace lmseg {

struct ArchConfig {
  std::size_t stem_width = 32;
  std::vector<std::size_t> stage_widths = {64, 128, 256, 512};
  double subsample_ratio = 1.0 / 3.0;
  std::size_t k_hier = 20;
  std::size_t k_local = 3;
  std::size_t k_interp = 3;
  double sim_threshold = 0.0;
  double pe_alpha = 100.0;
  double pe_beta = 1000.0;
  std::size_t num_classes = 2;
  FeatureSpec feature_spec;
  nn::NormKind norm = nn::NormKind::Batch;
  AggMode aggregation = AggMode::Combined;
  bool literal_pe = false;
  bool use_hga = true;
  bool use_lga = true;
  double head_dropout = 0.0;

  std::size_t stages() const { return stage_widths.size(); }
  std::size_t in_channels() const { return static_cast<std::size_t>(feature_spec.channels()); }

  void validate() const {
    if (stage_widths.empty()) fail(ErrorCode::InvalidConfig, "at least one encoder stage is required");
    if (stem_width == 0 || stem_width % 2 != 0) fail(ErrorCode::InvalidConfig, "stem width must be even and positive");
    std::size_t prev = stem_width;
    for (std::size_t w : stage_widths) {
      if (w != 2 * prev) fail(ErrorCode::InvalidConfig, "stage widths must double from the stem width");
      prev = w;
    }
    if (!(subsample_ratio > 0.0 && subsample_ratio <= 1.0)) fail(ErrorCode::InvalidConfig, "subsample ratio must lie in (0,1]");
    if (k_hier == 0 || k_interp == 0) fail(ErrorCode::InvalidConfig, "neighbor counts must be positive");
    if (num_classes < 2) fail(ErrorCode::InvalidConfig, "at least two classes are required");
    if (feature_spec.channels() == 0) fail(ErrorCode::InvalidFeatureSpec, "no input features selected");
    if (!(pe_alpha > 0.0 && pe_beta > 0.0)) fail(ErrorCode::InvalidConfig, "embedding alpha and beta must be positive");
    if (!use_hga && !use_lga) fail(ErrorCode::InvalidConfig, "an encoder stage needs HGA+ or LGA+");
    if (!(head_dropout >= 0.0 && head_dropout < 1.0)) fail(ErrorCode::InvalidConfig, "head dropout outside [0,1)");
  }
};

inline nlohmann::json to_json(const ArchConfig& a) {
  return {{"stem_width", a.stem_width},
          {"stage_widths", a.stage_widths},
          {"subsample_ratio", a.subsample_ratio},
          {"k_hier", a.k_hier},
          {"k_local", a.k_local},
          {"k_interp", a.k_interp},
          {"sim_threshold", a.sim_threshold},
          {"pe_alpha", a.pe_alpha},
          {"pe_beta", a.pe_beta},
          {"num_classes", a.num_classes},
          {"use_hsv", a.feature_spec.use_hsv},
          {"use_normals", a.feature_spec.use_normals},
          {"norm", nn::to_string(a.norm)},
          {"aggregation", to_string(a.aggregation)},
          {"literal_pe", a.literal_pe},
          {"use_hga", a.use_hga},
          {"use_lga", a.use_lga},
          {"head_dropout", a.head_dropout}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline ArchConfig arch_from_json(const nlohmann::json& j, ArchConfig base = {}) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "architecture config must be an object");
  const nlohmann::json known = to_json(base);
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) fail(ErrorCode::InvalidConfig, "unknown architecture key '" + key + "'");
      if (key == "stem_width") base.stem_width = value.get<std::size_t>();
      else if (key == "stage_widths") base.stage_widths = value.get<std::vector<std::size_t>>();
      else if (key == "subsample_ratio") base.subsample_ratio = value.get<double>();
      else if (key == "k_hier") base.k_hier = value.get<std::size_t>();
      else if (key == "k_local") base.k_local = value.get<std::size_t>();
      else if (key == "k_interp") base.k_interp = value.get<std::size_t>();
      else if (key == "sim_threshold") base.sim_threshold = value.get<double>();
      else if (key == "pe_alpha") base.pe_alpha = value.get<double>();
      else if (key == "pe_beta") base.pe_beta = value.get<double>();
      else if (key == "num_classes") base.num_classes = value.get<std::size_t>();
      else if (key == "use_hsv") base.feature_spec.use_hsv = value.get<bool>();
      else if (key == "use_normals") base.feature_spec.use_normals = value.get<bool>();
      else if (key == "norm") base.norm = nn::norm_kind_from_string(value.get<std::string>());
      else if (key == "aggregation") base.aggregation = agg_mode_from_string(value.get<std::string>());
      else if (key == "literal_pe") base.literal_pe = value.get<bool>();
      else if (key == "use_hga") base.use_hga = value.get<bool>();
      else if (key == "use_lga") base.use_lga = value.get<bool>();
      else if (key == "head_dropout") base.head_dropout = value.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("architecture config: ") + e.what());
  }
  base.validate();
  return base;
}

/// Inverse-distance weights from each fine node to its k nearest coarse nodes,
/// w = 1 / (d^2 + 1e-8), normalized to sum to one per fine node.
struct Interpolation {
  std::vector<Index> index;
  std::vector<double> weight;
  std::size_t k = 0;
};

inline constexpr double kIdwGuard = 1e-8;

inline Interpolation idw_weights(std::span<const Vec3> fine, std::span<const Vec3> coarse, std::size_t k) {
  if (coarse.empty()) fail(ErrorCode::EmptyMesh, "interpolation needs at least one coarse node");
  Interpolation out;
  out.k = std::min(k, coarse.size());
  out.index.reserve(fine.size() * out.k);
  out.weight.reserve(fine.size() * out.k);
  const KdTree tree(coarse);
  for (const Vec3& p : fine) {
    const auto nbrs = tree.knn(p, out.k);
    double total = 0.0;
    for (const Neighbor& nb : nbrs) total += 1.0 / (nb.dist2 + kIdwGuard);
    for (const Neighbor& nb : nbrs) {
      out.index.push_back(nb.index);
      out.weight.push_back(1.0 / (nb.dist2 + kIdwGuard) / total);
    }
  }
  return out;
}

template <class T>
ad::Var<T> interpolate(const ad::Var<T>& coarse_features, const Interpolation& w) {
  std::vector<T> weights(w.weight.begin(), w.weight.end());
  return ad::weighted_gather(coarse_features, w.index, std::move(weights), w.k);
}

/// Node sets and edges of one encoder level, recorded during a forward pass.
struct Hierarchy {
  std::vector<LevelGraph> levels;  // levels[0] is the input graph itself

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s;
    for (const auto& l : levels) s.push_back(l.size());
    return s;
  }
};

template <class T>
struct ForwardResult {
  ad::Var<T> logits;
  Hierarchy hierarchy;
};

template <class T>
class LMSeg {
 public:
  LMSeg(const ArchConfig& cfg, std::uint64_t init_seed) : cfg_(cfg), store_(init_seed) {
    cfg_.validate();
    GAConfig ga;
    ga.pe.alpha = cfg_.pe_alpha;
    ga.pe.beta = cfg_.pe_beta;
    ga.aggregation = cfg_.aggregation;
    ga.literal_pe = cfg_.literal_pe;
    ga.norm = cfg_.norm;

    const std::size_t c0 = cfg_.stem_width;
    stem_ = nn::MLP<T>(store_, "stem.mlp", {3 + cfg_.in_channels(), c0}, cfg_.norm);
    stem_ga_ = GAPlus<T>(store_, "stem.ga", c0, c0, ga);
    std::size_t prev = c0;
    for (std::size_t s = 0; s < cfg_.stages(); ++s) {
      const std::string n = "enc" + std::to_string(s + 1);
      Stage st;
      if (cfg_.use_hga) st.hga = GAPlus<T>(store_, n + ".hga", prev, prev, ga);
      if (cfg_.use_lga) st.lga = GAPlus<T>(store_, n + ".lga", prev, prev, ga);
      const std::size_t cat = (cfg_.use_hga ? prev : 0) + (cfg_.use_lga ? prev : 0);
      st.res = nn::ResMLP<T>(store_, n + ".res", cat, cfg_.stage_widths[s], cfg_.norm);
      stages_.push_back(std::move(st));
      prev = cfg_.stage_widths[s];
    }
    for (std::size_t s = cfg_.stages(); s-- > 0;) {
      const std::size_t fine = s == 0 ? c0 : cfg_.stage_widths[s - 1];
      const std::string n = "dec" + std::to_string(s + 1);
      Decoder d;
      d.reduce = nn::MLP<T>(store_, n + ".reduce", {cfg_.stage_widths[s], fine}, cfg_.norm);
      d.fuse = nn::MLP<T>(store_, n + ".fuse", {fine, fine}, cfg_.norm);
      decoders_.push_back(std::move(d));
    }
    head_ = nn::MLP<T>(store_, "head.mlp", {c0, c0}, cfg_.norm);
    classifier_ = nn::Linear<T>(store_, "head.classifier", c0, cfg_.num_classes);
  }

  LMSeg(const LMSeg&) = delete;
  LMSeg& operator=(const LMSeg&) = delete;

  /// Logits (N x num_classes) for a normalized dual graph. ctx.seed drives
  /// sub-sampling and dropout.
  ForwardResult<T> forward(const DualGraph& g, const nn::Context& ctx) const {
    if (!(g.feature_spec == cfg_.feature_spec) || static_cast<std::size_t>(g.channels) != cfg_.in_channels()) {
      fail(ErrorCode::SpecMismatch, "feature spec mismatch");
    }
    const std::size_t n = g.num_nodes();
    if (n == 0) fail(ErrorCode::EmptyMesh, "graph has no nodes");

    ForwardResult<T> out;
    auto& levels = out.hierarchy.levels;
    {
      LevelGraph l0;
      l0.level = 0;
      l0.positions = g.positions;
      l0.parent_index.resize(n);
      std::iota(l0.parent_index.begin(), l0.parent_index.end(), 0u);
      l0.edges_sparse = g.edges;
      l0.edges_local = g.edges;
      levels.push_back(std::move(l0));
    }

    const std::size_t cin = cfg_.in_channels();
    ad::Tensor<T> input(n, 3 + cin);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) input(i, c) = static_cast<T>(g.positions[i][c]);
      for (std::size_t c = 0; c < cin; ++c) input(i, 3 + c) = static_cast<T>(g.features[i * cin + c]);
    }
    ad::Var<T> h = stem_(ad::constant(std::move(input)), ctx);
    {
      const EdgeList e = EdgeList::bidirectional(g.edges);
      h = stem_ga_({g.positions, g.positions, &e}, h, h, ctx);
    }

    std::vector<ad::Var<T>> skips{h};
    for (std::size_t s = 0; s < cfg_.stages(); ++s) {
      const LevelGraph& prev = levels.back();
      LevelGraph lvl = random_subsample(prev.positions, prev.edges_local, cfg_.subsample_ratio,
                                        derive_seed(ctx.seed, {0x5ab, s}), static_cast<int>(s + 1));
      lvl.edges_hier = hierarchical_edges(lvl, prev.positions, std::min(cfg_.k_hier, prev.size()));
      const ad::Var<T> x0 = ad::gather_rows(h, lvl.parent_index);
      lvl.edges_local = edge_similarity_pool(lvl, std::span<const T>(x0.value().data), x0.cols(), cfg_.k_local,
                                             cfg_.sim_threshold, &lvl.isolated);
      const Stage& st = stages_[s];
      std::vector<ad::Var<T>> parts;
      ad::Var<T> x = x0;
      if (cfg_.use_hga) {
        const EdgeList e = EdgeList::from_hierarchical(lvl.edges_hier);
        x = st.hga({prev.positions, lvl.positions, &e}, h, x0, ctx);
        parts.push_back(x);
      }
      if (cfg_.use_lga) {
        const EdgeList e = EdgeList::bidirectional(lvl.edges_local);
        parts.push_back(st.lga({lvl.positions, lvl.positions, &e}, x, x, ctx));
      }
      h = st.res(parts.size() == 1 ? parts[0] : ad::concat_cols(parts), ctx);
      levels.push_back(std::move(lvl));
      if (s + 1 < cfg_.stages()) skips.push_back(h);
    }

    for (std::size_t d = 0; d < decoders_.size(); ++d) {
      const std::size_t s = cfg_.stages() - d;  // coarse level index
      const Interpolation w = idw_weights(levels[s - 1].positions, levels[s].positions, cfg_.k_interp);
      const Decoder& dec = decoders_[d];
      h = dec.fuse(ad::add(interpolate(dec.reduce(h, ctx), w), skips[s - 1]), ctx);
    }

    h = head_(h, ctx);
    h = ad::dropout(h, cfg_.head_dropout, derive_seed(ctx.seed, {0xd40}), ctx.training);
    out.logits = classifier_(h);
    return out;
  }

  const ArchConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }
  std::size_t param_count() const { return store_.param_count(); }

 private:
  struct Stage {
    GAPlus<T> hga;
    GAPlus<T> lga;
    nn::ResMLP<T> res;
  };
  struct Decoder {
    nn::MLP<T> reduce;
    nn::MLP<T> fuse;
  };

  ArchConfig cfg_;
  nn::ParamStore<T> store_;
  nn::MLP<T> stem_;
  GAPlus<T> stem_ga_;
  std::vector<Stage> stages_;
  std::vector<Decoder> decoders_;
  nn::MLP<T> head_;
  nn::Linear<T> classifier_;
};

}  // namespace lmseg
