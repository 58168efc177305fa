// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Parameters and the shared-MLP building blocks.

#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "lmseg/error.hpp"
#include "lmseg/ops.hpp"

namespace lmseg::nn {

using ad::Tensor;
using ad::Var;

template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
  Tensor<T> m;  // first moment
  Tensor<T> v;  // second moment

  std::size_t numel() const { return var.value().numel(); }
};

template <class T>
struct Buffer {
  std::string name;
  ad::NormStats<T> stats;
};

/// Owns every parameter and running-statistics buffer of a model. Addresses
/// are stable for the lifetime of the store.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    for (const auto& p : params_) {
      if (p.name == name) fail(ErrorCode::InvalidConfig, "duplicate parameter name " + name);
    }
    Parameter<T>& p = params_.emplace_back();
    p.name = name;
    p.m = ad::zeros_like(value);
    p.v = ad::zeros_like(value);
    p.var = Var<T>::leaf(std::move(value), true);
    return p;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  Parameter<T>& add_uniform(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> t(rows, cols);
    for (auto& x : t.data) x = static_cast<T>(u(rng_));
    return add(name, std::move(t));
  }

  ad::NormStats<T>& add_buffer(const std::string& name, std::size_t width) {
    Buffer<T>& b = buffers_.emplace_back();
    b.name = name;
    b.stats.mean = Tensor<T>(1, width, T(0));
    b.stats.var = Tensor<T>(1, width, T(1));
    return b.stats;
  }

  std::deque<Parameter<T>>& params() { return params_; }
  const std::deque<Parameter<T>>& params() const { return params_; }
  std::deque<Buffer<T>>& buffers() { return buffers_; }
  const std::deque<Buffer<T>>& buffers() const { return buffers_; }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const { return const_cast<ParamStore*>(this)->find(name); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

 private:
  std::mt19937_64 rng_;
  std::deque<Parameter<T>> params_;
  std::deque<Buffer<T>> buffers_;
};

/// Per-call switches that change layer behavior.
struct Context {
  bool training = false;
  std::uint64_t seed = 0;  // dropout masks and sub-sampling
};

enum class NormKind { Batch, Layer, None };

inline NormKind norm_kind_from_string(const std::string& s) {
  if (s == "batch") return NormKind::Batch;
  if (s == "layer") return NormKind::Layer;
  if (s == "none") return NormKind::None;
  fail(ErrorCode::InvalidConfig, "unknown norm kind '" + s + "'");
}

inline std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::Batch: return "batch";
    case NormKind::Layer: return "layer";
    case NormKind::None: return "none";
  }
  return "none";
}

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out)
      : w_(&store.add_uniform(name + ".weight", in, out, in)), b_(&store.add_uniform(name + ".bias", 1, out, in)) {}

  Var<T> operator()(const Var<T>& x) const { return ad::affine(x, w_->var, b_->var); }

  Parameter<T>& weight() { return *w_; }
  Parameter<T>& bias() { return *b_; }
  std::size_t in() const { return w_->var.rows(); }
  std::size_t out() const { return w_->var.cols(); }

 private:
  Parameter<T>* w_ = nullptr;
  Parameter<T>* b_ = nullptr;
};

template <class T>
class Norm {
 public:
  Norm() = default;
  Norm(ParamStore<T>& store, const std::string& name, std::size_t width, NormKind kind) : kind_(kind) {
    if (kind == NormKind::None) return;
    gamma_ = &store.add(name + ".gamma", Tensor<T>(1, width, T(1)));
    beta_ = &store.add(name + ".beta", Tensor<T>(1, width, T(0)));
    if (kind == NormKind::Batch) stats_ = &store.add_buffer(name + ".running", width);
  }

  Var<T> operator()(const Var<T>& x, const Context& ctx) const {
    switch (kind_) {
      case NormKind::Batch: return ad::batch_norm(x, gamma_->var, beta_->var, *stats_, ctx.training);
      case NormKind::Layer: return ad::layer_norm(x, gamma_->var, beta_->var);
      case NormKind::None: return x;
    }
    return x;
  }

  NormKind kind() const { return kind_; }

 private:
  NormKind kind_ = NormKind::None;
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
  ad::NormStats<T>* stats_ = nullptr;
};

/// Shared MLP: per layer affine -> norm -> relu, applied row-wise.
template <class T>
class MLP {
 public:
  MLP() = default;
  MLP(ParamStore<T>& store, const std::string& name, const std::vector<std::size_t>& widths, NormKind norm) {
    if (widths.size() < 2) fail(ErrorCode::InvalidConfig, "MLP needs at least an input and an output width");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const std::string n = name + "." + std::to_string(i);
      linears_.emplace_back(store, n + ".linear", widths[i], widths[i + 1]);
      norms_.emplace_back(store, n + ".norm", widths[i + 1], norm);
    }
  }

  Var<T> operator()(Var<T> x, const Context& ctx) const {
    for (std::size_t i = 0; i < linears_.size(); ++i) x = ad::relu(norms_[i](linears_[i](x), ctx));
    return x;
  }

  std::vector<Linear<T>>& linears() { return linears_; }
  std::size_t out() const { return linears_.back().out(); }

 private:
  std::vector<Linear<T>> linears_;
  std::vector<Norm<T>> norms_;
};

/// y = skip(x) + norm2(lin2(relu(norm1(lin1(x))))); skip is the identity
/// when widths match and a learned affine projection otherwise.
template <class T>
class ResMLP {
 public:
  ResMLP() = default;
  ResMLP(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, NormKind norm)
      : lin1_(store, name + ".fc1", in, out),
        norm1_(store, name + ".norm1", out, norm),
        lin2_(store, name + ".fc2", out, out),
        norm2_(store, name + ".norm2", out, norm) {
    if (in != out) proj_ = Linear<T>(store, name + ".proj", in, out);
    has_proj_ = in != out;
  }

  Var<T> operator()(const Var<T>& x, const Context& ctx) const {
    Var<T> h = ad::relu(norm1_(lin1_(x), ctx));
    h = norm2_(lin2_(h), ctx);
    return ad::add(has_proj_ ? proj_(x) : x, h);
  }

  Linear<T>& fc1() { return lin1_; }
  Linear<T>& fc2() { return lin2_; }
  Linear<T>* projection() { return has_proj_ ? &proj_ : nullptr; }

 private:
  Linear<T> lin1_;
  Norm<T> norm1_;
  Linear<T> lin2_;
  Norm<T> norm2_;
  Linear<T> proj_;
  bool has_proj_ = false;
};

}  // namespace lmseg::nn
