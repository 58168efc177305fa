// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable ops over 2D tensors. The set is exactly what the segmentation
// network needs; broadcasting is limited to adding or multiplying a 1 x C row.
// Reductions run in a fixed row order, so results are deterministic.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmseg/error.hpp"
#include "lmseg/tensor.hpp"

namespace lmseg::ad {

using Index = std::uint32_t;

namespace detail {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<MatR<T>> map(Tensor<T>& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <class T>
Eigen::Map<const MatR<T>> map(const Tensor<T>& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline std::string shape_str(std::size_t r, std::size_t c) { return "(" + std::to_string(r) + "x" + std::to_string(c) + ")"; }

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a.rows(), a.cols()) + " vs " +
                                       shape_str(b.rows(), b.cols()));
  }
}

inline void check_indices(std::span<const Index> idx, std::size_t bound, const char* op) {
  for (Index i : idx) {
    if (i >= bound) fail(ErrorCode::IndexOutOfRange, std::string(op) + ": index " + std::to_string(i) + " >= " + std::to_string(bound));
  }
}

// Elementwise unary op; df receives (input, output).
template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  Tensor<T> out = zeros_like(a.value());
  const auto& x = a.value().data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x[i]);
  return make_result<T>(std::move(out), {a}, [df](Node<T>& self) {
    Tensor<T>* ga = input_grad(self, 0);
    if (!ga) return;
    const auto& x = self.inputs[0]->value.data;
    const auto& y = self.value.data;
    const auto& g = self.grad.data;
    for (std::size_t i = 0; i < x.size(); ++i) ga->data[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>::leaf(std::move(value), false);
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::ShapeMismatch, "matmul: " + detail::shape_str(a.rows(), a.cols()) + " x " + detail::shape_str(b.rows(), b.cols()));
  }
  Tensor<T> out(a.rows(), b.cols());
  detail::map(out).noalias() = detail::map(a.value()) * detail::map(b.value());
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto g = detail::map(self.grad);
    if (Tensor<T>* ga = input_grad(self, 0)) detail::map(*ga).noalias() += g * detail::map(self.inputs[1]->value).transpose();
    if (Tensor<T>* gb = input_grad(self, 1)) detail::map(*gb).noalias() += detail::map(self.inputs[0]->value).transpose() * g;
  });
}

/// x W + b with b a 1 x out row.
template <class T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    fail(ErrorCode::ShapeMismatch, "affine: x" + detail::shape_str(x.rows(), x.cols()) + " W" +
                                       detail::shape_str(w.rows(), w.cols()) + " b" + detail::shape_str(b.rows(), b.cols()));
  }
  Tensor<T> out(x.rows(), w.cols());
  auto o = detail::map(out);
  o.noalias() = detail::map(x.value()) * detail::map(w.value());
  o.rowwise() += detail::map(b.value()).row(0);
  return make_result<T>(std::move(out), {x, w, b}, [](Node<T>& self) {
    const auto g = detail::map(self.grad);
    if (Tensor<T>* gx = input_grad(self, 0)) detail::map(*gx).noalias() += g * detail::map(self.inputs[1]->value).transpose();
    if (Tensor<T>* gw = input_grad(self, 1)) detail::map(*gw).noalias() += detail::map(self.inputs[0]->value).transpose() * g;
    if (Tensor<T>* gb = input_grad(self, 2)) {
      auto gbm = detail::map(*gb);
      for (Eigen::Index r = 0; r < g.rows(); ++r) gbm.row(0) += g.row(r);
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

/// a + b, where b has the shape of a or is a 1 x C row broadcast over rows.
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const bool bcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
  if (!bcast) detail::require_same(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[bcast ? i % c : i];
  return make_result<T>(std::move(out), {a, b}, [bcast, c](Node<T>& self) {
    const auto& g = self.grad.data;
    if (Tensor<T>* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g[i];
    }
    if (Tensor<T>* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[bcast ? i % c : i] += g[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad.data;
    if (Tensor<T>* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g[i];
    }
    if (Tensor<T>* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[i] -= g[i];
    }
  });
}

/// Hadamard product; b may be a 1 x C row broadcast over rows.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const bool bcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
  if (!bcast) detail::require_same(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[bcast ? i % c : i];
  return make_result<T>(std::move(out), {a, b}, [bcast, c](Node<T>& self) {
    const auto& g = self.grad.data;
    const auto& av = self.inputs[0]->value.data;
    const auto& bv = self.inputs[1]->value.data;
    if (Tensor<T>* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g[i] * bv[bcast ? i % c : i];
    }
    if (Tensor<T>* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[bcast ? i % c : i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    if (Tensor<T>* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.data.size(); ++i) ga->data[i] += factor * self.grad.data[i];
    }
  });
}

/// s * a for a differentiable 1 x 1 scalar s.
template <class T>
Var<T> scale_by(const Var<T>& a, const Var<T>& s) {
  if (s.value().numel() != 1) fail(ErrorCode::ShapeMismatch, "scale_by expects a 1x1 scalar");
  const T sv = s.value().data[0];
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= sv;
  return make_result<T>(std::move(out), {a, s}, [](Node<T>& self) {
    const auto& g = self.grad.data;
    const T sv = self.inputs[1]->value.data[0];
    if (Tensor<T>* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += sv * g[i];
    }
    if (Tensor<T>* gs = input_grad(self, 1)) {
      const auto& av = self.inputs[0]->value.data;
      T acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      gs->data[0] += acc;
    }
  });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> sin(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
}

template <class T>
Var<T> cos(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

// ---------------------------------------------------------------------------
// Structural ops

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "concat of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rows() != rows) fail(ErrorCode::ShapeMismatch, "concat: row counts differ");
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor<T> out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    const std::size_t c = v.cols();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.row(r), c, out.row(r) + offsets[k]);
  }
  return make_result<T>(std::move(out), parts, [offsets](Node<T>& self) {
    const std::size_t rows = self.value.rows();
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Tensor<T>* gk = input_grad(self, k);
      if (!gk) continue;
      const std::size_t c = gk->cols();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = self.grad.row(r) + offsets[k];
        T* dst = gk->row(r);
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
    }
  });
}

/// out[r] = a[idx[r]].
template <class T>
Var<T> gather_rows(const Var<T>& a, std::vector<Index> idx) {
  detail::check_indices(idx, a.rows(), "gather_rows");
  const std::size_t c = a.cols();
  Tensor<T> out(idx.size(), c);
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(a.value().row(idx[r]), c, out.row(r));
  return make_result<T>(std::move(out), {a}, [idx = std::move(idx), c](Node<T>& self) {
    Tensor<T>* ga = input_grad(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* g = self.grad.row(r);
      T* dst = ga->row(idx[r]);
      for (std::size_t j = 0; j < c; ++j) dst[j] += g[j];
    }
  });
}

enum class Reduce { Sum, Mean, Max };

/// Row-wise reduction into `groups` output rows: out[g] = reduce{a[r] : idx[r] == g}.
/// Empty groups yield zero rows. Max routes gradient to the first argmax row.
template <class T>
Var<T> scatter_reduce(const Var<T>& a, std::vector<Index> idx, std::size_t groups, Reduce mode) {
  if (idx.size() != a.rows()) fail(ErrorCode::ShapeMismatch, "scatter_reduce: one index per row required");
  detail::check_indices(idx, groups, "scatter_reduce");
  const std::size_t c = a.cols();
  const Tensor<T>& x = a.value();
  Tensor<T> out(groups, c);
  std::vector<T> count(groups, T(0));
  std::vector<std::int64_t> argmax;
  if (mode == Reduce::Max) {
    argmax.assign(groups * c, -1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* src = x.row(r);
      T* dst = out.row(idx[r]);
      std::int64_t* am = argmax.data() + idx[r] * c;
      for (std::size_t j = 0; j < c; ++j) {
        if (am[j] < 0 || src[j] > dst[j]) {
          dst[j] = src[j];
          am[j] = static_cast<std::int64_t>(r);
        }
      }
    }
  } else {
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* src = x.row(r);
      T* dst = out.row(idx[r]);
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      count[idx[r]] += T(1);
    }
    if (mode == Reduce::Mean) {
      for (std::size_t g = 0; g < groups; ++g) {
        if (count[g] > T(0)) {
          T* dst = out.row(g);
          for (std::size_t j = 0; j < c; ++j) dst[j] /= count[g];
        }
      }
    }
  }
  return make_result<T>(std::move(out), {a},
                        [idx = std::move(idx), count = std::move(count), argmax = std::move(argmax), mode, c](Node<T>& self) {
                          Tensor<T>* ga = input_grad(self, 0);
                          if (!ga) return;
                          if (mode == Reduce::Max) {
                            for (std::size_t g = 0; g < count.size(); ++g) {
                              for (std::size_t j = 0; j < c; ++j) {
                                const std::int64_t r = argmax[g * c + j];
                                if (r >= 0) (*ga)(static_cast<std::size_t>(r), j) += self.grad(g, j);
                              }
                            }
                            return;
                          }
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            const T* g = self.grad.row(idx[r]);
                            const T w = mode == Reduce::Mean ? T(1) / count[idx[r]] : T(1);
                            T* dst = ga->row(r);
                            for (std::size_t j = 0; j < c; ++j) dst[j] += w * g[j];
                          }
                        });
}

/// Per-column softmax over the rows of each group (rows sharing idx[r]).
template <class T>
Var<T> group_softmax(const Var<T>& a, std::vector<Index> idx, std::size_t groups) {
  if (idx.size() != a.rows()) fail(ErrorCode::ShapeMismatch, "group_softmax: one index per row required");
  detail::check_indices(idx, groups, "group_softmax");
  const std::size_t c = a.cols();
  const Tensor<T>& x = a.value();
  Tensor<T> gmax(groups, c, -std::numeric_limits<T>::infinity());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const T* src = x.row(r);
    T* m = gmax.row(idx[r]);
    for (std::size_t j = 0; j < c; ++j) m[j] = std::max(m[j], src[j]);
  }
  Tensor<T> out(x.rows(), c);
  Tensor<T> denom(groups, c);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const T* src = x.row(r);
    const T* m = gmax.row(idx[r]);
    T* dst = out.row(r);
    T* d = denom.row(idx[r]);
    for (std::size_t j = 0; j < c; ++j) {
      dst[j] = std::exp(src[j] - m[j]);
      d[j] += dst[j];
    }
  }
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const T* d = denom.row(idx[r]);
    T* dst = out.row(r);
    for (std::size_t j = 0; j < c; ++j) dst[j] /= d[j];
  }
  for (T v : out.data) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "group_softmax produced a non-finite weight");
  }
  return make_result<T>(std::move(out), {a}, [idx = std::move(idx), groups, c](Node<T>& self) {
    Tensor<T>* ga = input_grad(self, 0);
    if (!ga) return;
    // d x = y * (g - sum_group(y * g))
    Tensor<T> dot(groups, c);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* y = self.value.row(r);
      const T* g = self.grad.row(r);
      T* d = dot.row(idx[r]);
      for (std::size_t j = 0; j < c; ++j) d[j] += y[j] * g[j];
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* y = self.value.row(r);
      const T* g = self.grad.row(r);
      const T* d = dot.row(idx[r]);
      T* dst = ga->row(r);
      for (std::size_t j = 0; j < c; ++j) dst[j] += y[j] * (g[j] - d[j]);
    }
  });
}

/// out[i] = sum_j w[i*k+j] * src[idx[i*k+j]]; weights are constants.
template <class T>
Var<T> weighted_gather(const Var<T>& src, std::vector<Index> idx, std::vector<T> weights, std::size_t k) {
  if (k == 0 || idx.size() % k != 0 || weights.size() != idx.size()) {
    fail(ErrorCode::ShapeMismatch, "weighted_gather: index/weight layout");
  }
  detail::check_indices(idx, src.rows(), "weighted_gather");
  const std::size_t n = idx.size() / k;
  const std::size_t c = src.cols();
  Tensor<T> out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    T* dst = out.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      const T w = weights[i * k + j];
      const T* s = src.value().row(idx[i * k + j]);
      for (std::size_t q = 0; q < c; ++q) dst[q] += w * s[q];
    }
  }
  return make_result<T>(std::move(out), {src}, [idx = std::move(idx), weights = std::move(weights), k, n, c](Node<T>& self) {
    Tensor<T>* gs = input_grad(self, 0);
    if (!gs) return;
    for (std::size_t i = 0; i < n; ++i) {
      const T* g = self.grad.row(i);
      for (std::size_t j = 0; j < k; ++j) {
        const T w = weights[i * k + j];
        T* dst = gs->row(idx[i * k + j]);
        for (std::size_t q = 0; q < c; ++q) dst[q] += w * g[q];
      }
    }
  });
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().data) acc += v;
  return make_result<T>(Tensor<T>::scalar(acc), {a}, [](Node<T>& self) {
    if (Tensor<T>* ga = input_grad(self, 0)) {
      const T g = self.grad.data[0];
      for (auto& v : ga->data) v += g;
    }
  });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  const std::size_t n = std::max<std::size_t>(1, a.value().numel());
  return scale(sum_all(a), T(1) / static_cast<T>(n));
}

// ---------------------------------------------------------------------------
// Normalization and regularization

/// Divides each column by (population std over rows + eps). Gradient flows
/// through the std; a zero-variance column uses the zero subgradient.
template <class T>
Var<T> std_normalize(const Var<T>& a, T eps) {
  const std::size_t n = a.rows(), c = a.cols();
  const Tensor<T>& x = a.value();
  std::vector<T> mean(c, T(0)), sd(c, T(0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) mean[j] += x(r, j);
  }
  for (auto& m : mean) m /= static_cast<T>(std::max<std::size_t>(n, 1));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const T d = x(r, j) - mean[j];
      sd[j] += d * d;
    }
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<T>(std::max<std::size_t>(n, 1)));
  Tensor<T> out(n, c);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) out(r, j) = x(r, j) / (sd[j] + eps);
  }
  return make_result<T>(std::move(out), {a}, [mean, sd, eps](Node<T>& self) {
    Tensor<T>* ga = input_grad(self, 0);
    if (!ga) return;
    const Tensor<T>& x = self.inputs[0]->value;
    const std::size_t n = x.rows(), c = x.cols();
    std::vector<T> gx(c, T(0));  // sum_r g * x
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < c; ++j) gx[j] += self.grad(r, j) * x(r, j);
    }
    for (std::size_t j = 0; j < c; ++j) {
      const T inv = T(1) / (sd[j] + eps);
      // d sd / d x_r = (x_r - mean) / (n sd)
      const T coeff = sd[j] > T(0) ? gx[j] * inv * inv / (static_cast<T>(n) * sd[j]) : T(0);
      for (std::size_t r = 0; r < n; ++r) {
        (*ga)(r, j) += self.grad(r, j) * inv - coeff * (x(r, j) - mean[j]);
      }
    }
  });
}

/// Running statistics owned by a batch-norm layer.
template <class T>
struct NormStats {
  Tensor<T> mean;
  Tensor<T> var;
};

/// Per-feature batch normalization over rows. In training mode the batch
/// statistics are used and the running estimates are updated with `momentum`
/// (unbiased variance); in eval mode the running estimates are used.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, NormStats<T>& stats, bool training,
                  T momentum = T(0.1), T eps = T(1e-5)) {
  const std::size_t n = x.rows(), c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) fail(ErrorCode::ShapeMismatch, "batch_norm: affine width");
  std::vector<T> mean(c, T(0)), inv_std(c, T(0));
  const Tensor<T>& xv = x.value();
  if (training && n > 0) {
    std::vector<T> var(c, T(0));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < c; ++j) mean[j] += xv(r, j);
    }
    for (auto& m : mean) m /= static_cast<T>(n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const T d = xv(r, j) - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      const T biased = var[j] / static_cast<T>(n);
      inv_std[j] = T(1) / std::sqrt(biased + eps);
      const T unbiased = n > 1 ? var[j] / static_cast<T>(n - 1) : biased;
      stats.mean.data[j] = (T(1) - momentum) * stats.mean.data[j] + momentum * mean[j];
      stats.var.data[j] = (T(1) - momentum) * stats.var.data[j] + momentum * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = stats.mean.data[j];
      inv_std[j] = T(1) / std::sqrt(stats.var.data[j] + eps);
    }
  }
  Tensor<T> xhat(n, c);
  Tensor<T> out(n, c);
  const auto& gv = gamma.value().data;
  const auto& bv = beta.value().data;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xv(r, j) - mean[j]) * inv_std[j];
      xhat(r, j) = h;
      out(r, j) = gv[j] * h + bv[j];
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), training](Node<T>& self) {
                          const std::size_t n = xhat.rows(), c = xhat.cols();
                          const auto& gv = self.inputs[1]->value.data;
                          std::vector<T> sum_g(c, T(0)), sum_gh(c, T(0));
                          for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                              sum_g[j] += self.grad(r, j);
                              sum_gh[j] += self.grad(r, j) * xhat(r, j);
                            }
                          }
                          if (Tensor<T>* gg = input_grad(self, 1)) {
                            for (std::size_t j = 0; j < c; ++j) gg->data[j] += sum_gh[j];
                          }
                          if (Tensor<T>* gb = input_grad(self, 2)) {
                            for (std::size_t j = 0; j < c; ++j) gb->data[j] += sum_g[j];
                          }
                          Tensor<T>* gx = input_grad(self, 0);
                          if (!gx) return;
                          const T inv_n = T(1) / static_cast<T>(n);
                          for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                              const T g = self.grad(r, j);
                              (*gx)(r, j) += training
                                                 ? gv[j] * inv_std[j] * (g - inv_n * sum_g[j] - xhat(r, j) * inv_n * sum_gh[j])
                                                 : gv[j] * inv_std[j] * g;
                            }
                          }
                        });
}

/// Per-row normalization over features followed by a per-feature affine.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const std::size_t n = x.rows(), c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) fail(ErrorCode::ShapeMismatch, "layer_norm: affine width");
  const Tensor<T>& xv = x.value();
  Tensor<T> xhat(n, c), out(n, c);
  std::vector<T> inv_std(n);
  const auto& gv = gamma.value().data;
  const auto& bv = beta.value().data;
  for (std::size_t r = 0; r < n; ++r) {
    T m = 0, v = 0;
    for (std::size_t j = 0; j < c; ++j) m += xv(r, j);
    m /= static_cast<T>(c);
    for (std::size_t j = 0; j < c; ++j) v += (xv(r, j) - m) * (xv(r, j) - m);
    inv_std[r] = T(1) / std::sqrt(v / static_cast<T>(c) + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(r, j) = (xv(r, j) - m) * inv_std[r];
      out(r, j) = gv[j] * xhat(r, j) + bv[j];
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    const std::size_t n = xhat.rows(), c = xhat.cols();
    const auto& gv = self.inputs[1]->value.data;
    Tensor<T>* gg = input_grad(self, 1);
    Tensor<T>* gb = input_grad(self, 2);
    Tensor<T>* gx = input_grad(self, 0);
    for (std::size_t r = 0; r < n; ++r) {
      T sum_d = 0, sum_dh = 0;
      for (std::size_t j = 0; j < c; ++j) {
        const T g = self.grad(r, j);
        if (gg) gg->data[j] += g * xhat(r, j);
        if (gb) gb->data[j] += g;
        const T d = g * gv[j];
        sum_d += d;
        sum_dh += d * xhat(r, j);
      }
      if (!gx) continue;
      const T inv_c = T(1) / static_cast<T>(c);
      for (std::size_t j = 0; j < c; ++j) {
        const T d = self.grad(r, j) * gv[j];
        (*gx)(r, j) += inv_std[r] * (d - inv_c * sum_d - xhat(r, j) * inv_c * sum_dh);
      }
    }
  });
}

/// Inverted dropout with a seeded mask. Rate 0 is the identity, rate 1 zeroes
/// everything (and every gradient). Outside training it is the identity.
template <class T>
Var<T> dropout(const Var<T>& a, double rate, std::uint64_t seed, bool training) {
  if (!(rate >= 0.0 && rate <= 1.0)) fail(ErrorCode::InvalidConfig, "dropout rate outside [0,1]");
  if (!training || rate == 0.0) return a;
  std::vector<T> mask(a.value().numel(), T(0));
  if (rate < 1.0) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(1.0 - rate);
    const T s = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask) m = keep(rng) ? s : T(0);
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] *= mask[i];
  return make_result<T>(std::move(out), {a}, [mask = std::move(mask)](Node<T>& self) {
    if (Tensor<T>* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) ga->data[i] += mask[i] * self.grad.data[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Loss

/// Mean over rows of weights[label] * cross-entropy against the smoothed target
/// (1 - s) * onehot + s / K.
template <class T>
Var<T> smoothed_weighted_ce(const Var<T>& logits, std::span<const int> labels, std::span<const double> class_weights,
                            double smoothing) {
  const std::size_t n = logits.rows(), k = logits.cols();
  if (labels.size() != n) fail(ErrorCode::LengthMismatch, "one label per row required");
  if (class_weights.size() != k) fail(ErrorCode::ShapeMismatch, "one weight per class required");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) fail(ErrorCode::InvalidConfig, "label smoothing outside [0,1)");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) fail(ErrorCode::InvalidLabel, "label " + std::to_string(l));
  }
  const Tensor<T>& z = logits.value();
  Tensor<T> prob(n, k);
  const T off = static_cast<T>(smoothing / static_cast<double>(k));
  const T on = static_cast<T>(1.0 - smoothing) + off;
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* zr = z.row(r);
    const T m = *std::max_element(zr, zr + k);
    T se = 0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(zr[j] - m);
    const T lse = m + std::log(se);
    T ce = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T logp = zr[j] - lse;
      prob(r, j) = std::exp(logp);
      ce -= (static_cast<std::size_t>(labels[r]) == j ? on : off) * logp;
    }
    total += static_cast<T>(class_weights[labels[r]]) * ce;
  }
  const T loss = n > 0 ? total / static_cast<T>(n) : T(0);
  if (!std::isfinite(loss)) fail(ErrorCode::NonFiniteLoss, "loss is not finite");
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> cw(class_weights.begin(), class_weights.end());
  return make_result<T>(Tensor<T>::scalar(loss), {logits},
                        [prob = std::move(prob), lab = std::move(lab), cw = std::move(cw), on, off](Node<T>& self) {
                          Tensor<T>* gz = input_grad(self, 0);
                          if (!gz) return;
                          const std::size_t n = prob.rows(), k = prob.cols();
                          const T g = self.grad.data[0] / static_cast<T>(n);
                          for (std::size_t r = 0; r < n; ++r) {
                            const T w = g * static_cast<T>(cw[lab[r]]);
                            for (std::size_t j = 0; j < k; ++j) {
                              const T q = static_cast<std::size_t>(lab[r]) == j ? on : off;
                              (*gz)(r, j) += w * (prob(r, j) - q);
                            }
                          }
                        });
}

}  // namespace lmseg::ad
