// Copyright 2026 the relocl authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "relocl/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace relocl {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
std::pair<std::size_t, std::size_t> as_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 1) return {1, t.dim(0)};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(t.shape()));
}

// Input grad buffer if that input participates in the graph, else nullptr.
template <typename T>
std::vector<T>* input_grad(TensorNode<T>& out, std::size_t i) {
  auto& in = *out.inputs[i];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_map(const Tensor<T>& a, Fwd fwd, Bwd dydx) {
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [dydx](TensorNode<T>& node) {
    auto* g = input_grad(node, 0);
    if (!g) return;
    const auto& x = node.inputs[0]->data;
    for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += node.grad[i] * dydx(x[i], node.data[i]);
  });
}

std::uint32_t fnv_mix(std::uint32_t hash, std::uint32_t value) {
  hash ^= value;
  return hash * 16777619u;
}

}  // namespace

std::size_t count_valid(std::span<const std::uint8_t> mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto [m, k] = as_matrix(a, "matmul");
  std::size_t kb = 0, n = 0;
  if (b.rank() == 2) {
    kb = b.dim(0);
    n = b.dim(1);
  } else if (b.rank() == 1) {
    kb = b.dim(0);
    n = 1;
  } else {
    throw DimensionError("matmul: right operand must be rank 1 or 2, got " + shape_str(b.shape()));
  }
  if (a.rank() == 1 && b.rank() == 1) throw DimensionError("matmul: use dot() for two vectors");
  if (k != kb) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Shape shape;
  if (a.rank() == 2 && b.rank() == 2) shape = {m, n};
  else if (a.rank() == 1) shape = {n};
  else shape = {m};

  std::vector<T> out(m * n);
  MapMat<T>(out.data(), m, n).noalias() = ConstMapMat<T>(a.data().data(), m, k) * ConstMapMat<T>(b.data().data(), k, n);
  return detail::make_result<T>(std::move(shape), std::move(out), {a.node(), b.node()},
                                [m, k, n](TensorNode<T>& node) {
                                  ConstMapMat<T> grad(node.grad.data(), m, n);
                                  if (auto* ga = input_grad(node, 0)) {
                                    ConstMapMat<T> bm(node.inputs[1]->data.data(), k, n);
                                    MapMat<T>(ga->data(), m, k).noalias() += grad * bm.transpose();
                                  }
                                  if (auto* gb = input_grad(node, 1)) {
                                    ConstMapMat<T> am(node.inputs[0]->data.data(), m, k);
                                    MapMat<T>(gb->data(), k, n).noalias() += am.transpose() * grad;
                                  }
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  MapMat<T>(out.data(), n, m) = ConstMapMat<T>(a.data().data(), m, n).transpose();
  return detail::make_result<T>({n, m}, std::move(out), {a.node()}, [m, n](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      MapMat<T>(g->data(), m, n) += ConstMapMat<T>(node.grad.data(), n, m).transpose();
    }
  });
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 1) throw DimensionError("dot: expected vectors, got " + shape_str(a.shape()));
  require_same_shape(a, b, "dot");
  auto x = a.data();
  auto y = b.data();
  T acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return detail::make_result<T>({}, {acc}, {a.node(), b.node()}, [](TensorNode<T>& node) {
    const T g = node.grad[0];
    const auto& x = node.inputs[0]->data;
    const auto& y = node.inputs[1]->data;
    if (auto* ga = input_grad(node, 0)) for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g * y[i];
    if (auto* gb = input_grad(node, 1)) for (std::size_t i = 0; i < y.size(); ++i) (*gb)[i] += g * x[i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode<T>& node) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (auto* g = input_grad(node, j)) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] += node.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] += node.grad[i];
    }
    if (auto* g = input_grad(node, 1)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] -= node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode<T>& node) {
    const auto& x = node.inputs[0]->data;
    const auto& y = node.inputs[1]->data;
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] += node.grad[i] * y[i];
    }
    if (auto* g = input_grad(node, 1)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] += node.grad[i] * x[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary_map(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary_map(a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  if (KinkTrace::active()) {
    std::uint32_t hash = 2166136261u;
    for (T x : a.data()) hash = fnv_mix(hash, x > T(0) ? 1u : 0u);
    KinkTrace::record(hash);
  }
  // Subgradient 0 at the kink.
  return unary_map(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary_map(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  for (T x : a.data()) {
    if (!(x > T(0))) throw DomainError("log of a non-positive value");
  }
  return unary_map(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  return unary_map(
      a, [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); },
      [](T x, T) {
        // sigmoid(x), split by sign to avoid overflow
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
      });
}

template <typename T>
Tensor<T> add_row_vector(const Tensor<T>& x, const Tensor<T>& b) {
  auto [m, n] = as_matrix(x, "add_row_vector");
  if (b.rank() != 1 || b.dim(0) != n) {
    throw DimensionError("add_row_vector: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto bias = b.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias[c];
  return detail::make_result<T>(x.shape(), std::move(out), {x.node(), b.node()}, [m, n](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] += node.grad[i];
    }
    if (auto* g = input_grad(node, 1)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) (*g)[c] += node.grad[r * n + c];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T x : a.data()) acc += x;
  return detail::make_result<T>({}, {acc}, {a.node()}, [](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (auto& v : *g) v += node.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> logsumexp(const Tensor<T>& a) {
  auto x = a.data();
  T peak = *std::max_element(x.begin(), x.end());
  T acc = 0;
  for (T v : x) acc += std::exp(v - peak);
  T value = peak + std::log(acc);
  return detail::make_result<T>({}, {value}, {a.node()}, [](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      const auto& x = node.inputs[0]->data;
      for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += node.grad[0] * std::exp(x[i] - node.data[0]);
    }
  });
}

template <typename T>
Tensor<T> masked_max(const Tensor<T>& a, std::span<const std::uint8_t> mask) {
  if (a.rank() != 1 || mask.size() != a.dim(0)) {
    throw DimensionError("masked_max: mask length does not match " + shape_str(a.shape()));
  }
  auto x = a.data();
  std::size_t best = x.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i] && (best == x.size() || x[i] > x[best])) best = i;
  }
  if (best == x.size()) throw DomainError("masked_max: every position is masked");
  KinkTrace::record(static_cast<std::uint32_t>(best));
  return detail::make_result<T>({}, {x[best]}, {a.node()}, [best](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) (*g)[best] += node.grad[0];
  });
}

namespace {

template <typename T>
void softmax_rows_forward(std::span<const T> x, std::span<const std::uint8_t> mask, std::size_t m, std::size_t n,
                          std::vector<T>& out) {
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = x.data() + r * n;
    T* dst = out.data() + r * n;
    T peak = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < n; ++c)
      if (mask[c]) peak = std::max(peak, row[c]);
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      dst[c] = mask[c] ? std::exp(row[c] - peak) : T(0);
      total += dst[c];
    }
    for (std::size_t c = 0; c < n; ++c) dst[c] /= total;
  }
}

template <typename T>
Tensor<T> softmax_rows_impl(const Tensor<T>& x, std::span<const std::uint8_t> mask, std::size_t m, std::size_t n) {
  if (mask.size() != n) throw DimensionError("masked_softmax: mask length does not match " + shape_str(x.shape()));
  if (count_valid(mask) == 0) throw DomainError("masked_softmax: every position is masked");
  std::vector<T> out(m * n);
  softmax_rows_forward(x.data(), mask, m, n, out);
  return detail::make_result<T>(x.shape(), std::move(out), {x.node()}, [m, n](TensorNode<T>& node) {
    auto* g = input_grad(node, 0);
    if (!g) return;
    for (std::size_t r = 0; r < m; ++r) {
      const T* y = node.data.data() + r * n;
      const T* gy = node.grad.data() + r * n;
      T inner = 0;
      for (std::size_t c = 0; c < n; ++c) inner += gy[c] * y[c];
      for (std::size_t c = 0; c < n; ++c) (*g)[r * n + c] += y[c] * (gy[c] - inner);
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, std::span<const std::uint8_t> mask) {
  if (x.rank() != 1) throw DimensionError("masked_softmax: expected a vector, got " + shape_str(x.shape()));
  return softmax_rows_impl(x, mask, 1, x.dim(0));
}

template <typename T>
Tensor<T> masked_softmax_rows(const Tensor<T>& x, std::span<const std::uint8_t> mask) {
  auto [m, n] = as_matrix(x, "masked_softmax_rows");
  return softmax_rows_impl(x, mask, m, n);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  auto [m, n] = as_matrix(x, "layer_norm");
  if (gain.rank() != 1 || gain.dim(0) != n || bias.shape() != gain.shape()) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(n) + "]");
  }
  auto in = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<T> out(m * n);
  std::vector<T> normalized(m * n);
  std::vector<T> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = in.data() + r * n;
    T mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      T h = (row[c] - mu) * inv_std[r];
      normalized[r * n + c] = h;
      out[r * n + c] = gv[c] * h + bv[c];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [m, n, normalized = std::move(normalized), inv_std = std::move(inv_std)](TensorNode<T>& node) {
        const auto& gv = node.inputs[1]->data;
        auto* gx = input_grad(node, 0);
        auto* gg = input_grad(node, 1);
        auto* gb = input_grad(node, 2);
        std::vector<T> dh(n);
        for (std::size_t r = 0; r < m; ++r) {
          const T* gy = node.grad.data() + r * n;
          const T* h = normalized.data() + r * n;
          if (gg)
            for (std::size_t c = 0; c < n; ++c) (*gg)[c] += gy[c] * h[c];
          if (gb)
            for (std::size_t c = 0; c < n; ++c) (*gb)[c] += gy[c];
          if (!gx) continue;
          T sum_dh = 0, sum_dh_h = 0;
          for (std::size_t c = 0; c < n; ++c) {
            dh[c] = gy[c] * gv[c];
            sum_dh += dh[c];
            sum_dh_h += dh[c] * h[c];
          }
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t c = 0; c < n; ++c) {
            (*gx)[r * n + c] += inv_std[r] * (dh[c] - inv_n * sum_dh - h[c] * inv_n * sum_dh_h);
          }
        }
      });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps) {
  auto [m, n] = as_matrix(x, "l2_normalize_rows");
  auto in = x.data();
  std::vector<T> out(m * n);
  std::vector<T> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    T sq = 0;
    for (std::size_t c = 0; c < n; ++c) sq += in[r * n + c] * in[r * n + c];
    norms[r] = std::sqrt(sq);
    T denom = std::max(norms[r], eps);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = in[r * n + c] / denom;
  }
  return detail::make_result<T>(x.shape(), std::move(out), {x.node()},
                                [m, n, eps, norms = std::move(norms)](TensorNode<T>& node) {
                                  auto* g = input_grad(node, 0);
                                  if (!g) return;
                                  for (std::size_t r = 0; r < m; ++r) {
                                    const T* y = node.data.data() + r * n;
                                    const T* gy = node.grad.data() + r * n;
                                    if (norms[r] <= eps) {
                                      for (std::size_t c = 0; c < n; ++c) (*g)[r * n + c] += gy[c] / eps;
                                      continue;
                                    }
                                    T inner = 0;
                                    for (std::size_t c = 0; c < n; ++c) inner += gy[c] * y[c];
                                    for (std::size_t c = 0; c < n; ++c)
                                      (*g)[r * n + c] += (gy[c] - y[c] * inner) / norms[r];
                                  }
                                });
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernels) {
  if (x.rank() != 2 || kernels.rank() != 3) {
    throw DimensionError("conv1d: expected x[c_in x n] and kernels[c_out x c_in x w]");
  }
  const std::size_t c_in = x.dim(0), n = x.dim(1);
  const std::size_t c_out = kernels.dim(0), w = kernels.dim(2);
  if (kernels.dim(1) != c_in) throw DimensionError("conv1d: kernel input channels do not match x");
  if (w % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(w));
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(w / 2);
  auto xv = x.data();
  auto kv = kernels.data();
  std::vector<T> out(c_out * n, T(0));
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < w; ++j) {
        const T k = kv[(o * c_in + c) * w + j];
        for (std::size_t t = 0; t < n; ++t) {
          std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
          out[o * n + t] += k * xv[c * n + static_cast<std::size_t>(src)];
        }
      }
  return detail::make_result<T>(
      {c_out, n}, std::move(out), {x.node(), kernels.node()}, [c_in, c_out, n, w, pad](TensorNode<T>& node) {
        const auto& xv = node.inputs[0]->data;
        const auto& kv = node.inputs[1]->data;
        auto* gx = input_grad(node, 0);
        auto* gk = input_grad(node, 1);
        for (std::size_t o = 0; o < c_out; ++o)
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t j = 0; j < w; ++j) {
              const std::size_t ki = (o * c_in + c) * w + j;
              for (std::size_t t = 0; t < n; ++t) {
                std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
                const T gy = node.grad[o * n + t];
                if (gx) (*gx)[c * n + static_cast<std::size_t>(src)] += gy * kv[ki];
                if (gk) (*gk)[ki] += gy * xv[c * n + static_cast<std::size_t>(src)];
              }
            }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T factor = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> scale_mask(x.numel());
  for (auto& s : scale_mask) s = keep(rng) ? factor : T(0);
  std::vector<T> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * scale_mask[i];
  return detail::make_result<T>(x.shape(), std::move(out), {x.node()},
                                [scale_mask = std::move(scale_mask)](TensorNode<T>& node) {
                                  if (auto* g = input_grad(node, 0)) {
                                    for (std::size_t i = 0; i < scale_mask.size(); ++i)
                                      (*g)[i] += node.grad[i] * scale_mask[i];
                                  }
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {a.node()}, [](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] += node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count) {
  if (a.rank() != 2 || count == 0 || start + count > a.dim(1)) {
    throw DimensionError("slice_cols: bad range for " + shape_str(a.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * count);
  auto in = a.data();
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(in.data() + r * n + start, count, out.data() + r * count);
  return detail::make_result<T>({m, count}, std::move(out), {a.node()}, [m, n, start, count](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < count; ++c) (*g)[r * n + start + c] += node.grad[r * count + c];
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count) {
  if (a.rank() == 0 || count == 0 || start + count > a.dim(0)) {
    throw DimensionError("slice_rows: bad range for " + shape_str(a.shape()));
  }
  const std::size_t stride = a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = count;
  std::vector<T> out(a.data().begin() + static_cast<std::ptrdiff_t>(start * stride),
                     a.data().begin() + static_cast<std::ptrdiff_t>((start + count) * stride));
  return detail::make_result<T>(std::move(shape), std::move(out), {a.node()}, [start, stride](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[start * stride + i] += node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
    inputs.push_back(p.node());
  }
  std::vector<T> out(m * total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto in = parts[i].data();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(in.data() + r * widths[i], widths[i], out.data() + r * total + offset);
    offset += widths[i];
  }
  return detail::make_result<T>({m, total}, std::move(out), std::move(inputs),
                                [m, total, widths](TensorNode<T>& node) {
                                  std::size_t offset = 0;
                                  for (std::size_t i = 0; i < widths.size(); ++i) {
                                    if (auto* g = input_grad(node, i)) {
                                      for (std::size_t r = 0; r < m; ++r)
                                        for (std::size_t c = 0; c < widths[i]; ++c)
                                          (*g)[r * widths[i] + c] += node.grad[r * total + offset + c];
                                    }
                                    offset += widths[i];
                                  }
                                });
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape& inner = parts[0].shape();
  const std::size_t stride = parts[0].numel();
  std::vector<T> out;
  out.reserve(stride * parts.size());
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) {
    if (p.shape() != inner) throw DimensionError("stack: shapes differ");
    out.insert(out.end(), p.data().begin(), p.data().end());
    inputs.push_back(p.node());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return detail::make_result<T>(std::move(shape), std::move(out), std::move(inputs), [stride](TensorNode<T>& node) {
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (auto* g = input_grad(node, i)) {
        for (std::size_t j = 0; j < stride; ++j) (*g)[j] += node.grad[i * stride + j];
      }
    }
  });
}

template <typename T>
Tensor<T> gather(const Tensor<T>& a, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("gather: empty index list");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<T> out(idx.size());
  auto in = a.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= in.size()) throw DimensionError("gather: index out of range");
    out[i] = in[idx[i]];
  }
  return detail::make_result<T>({idx.size()}, std::move(out), {a.node()}, [idx](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) (*g)[idx[i]] += node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> zero_masked_rows(const Tensor<T>& x, std::span<const std::uint8_t> mask) {
  auto [m, n] = x.rank() == 1 ? std::pair<std::size_t, std::size_t>{x.dim(0), 1} : as_matrix(x, "zero_masked_rows");
  if (mask.size() != m) throw DimensionError("zero_masked_rows: mask length does not match " + shape_str(x.shape()));
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < m; ++r)
    if (!keep[r]) std::fill_n(out.data() + r * n, n, T(0));
  return detail::make_result<T>(x.shape(), std::move(out), {x.node()}, [n, keep](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t r = 0; r < keep.size(); ++r)
        if (keep[r])
          for (std::size_t c = 0; c < n; ++c) (*g)[r * n + c] += node.grad[r * n + c];
    }
  });
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, std::span<const std::uint8_t> mask, T value) {
  if (x.rank() != 1 || mask.size() != x.dim(0)) throw DimensionError("masked_fill: mask length mismatch");
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!keep[i]) out[i] = value;
  return detail::make_result<T>(x.shape(), std::move(out), {x.node()}, [keep](TensorNode<T>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) (*g)[i] += node.grad[i];
    }
  });
}

#define RELOCL_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> transpose(const Tensor<T>&);                                                  \
  template Tensor<T> dot(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                                   \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                              \
  template Tensor<T> neg(const Tensor<T>&);                                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                       \
  template Tensor<T> exp(const Tensor<T>&);                                                        \
  template Tensor<T> log(const Tensor<T>&);                                                        \
  template Tensor<T> softplus(const Tensor<T>&);                                                   \
  template Tensor<T> add_row_vector(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&);                                                       \
  template Tensor<T> logsumexp(const Tensor<T>&);                                                  \
  template Tensor<T> masked_max(const Tensor<T>&, std::span<const std::uint8_t>);                  \
  template Tensor<T> masked_softmax(const Tensor<T>&, std::span<const std::uint8_t>);              \
  template Tensor<T> masked_softmax_rows(const Tensor<T>&, std::span<const std::uint8_t>);         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);          \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, T);                                       \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::mt19937_64&);                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                       \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                       \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                   \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);                                         \
  template Tensor<T> gather(const Tensor<T>&, std::span<const std::size_t>);                       \
  template Tensor<T> zero_masked_rows(const Tensor<T>&, std::span<const std::uint8_t>);                \
  template Tensor<T> masked_fill(const Tensor<T>&, std::span<const std::uint8_t>, T);

RELOCL_INSTANTIATE_OPS(float)
RELOCL_INSTANTIATE_OPS(double)

#undef RELOCL_INSTANTIATE_OPS

}  // namespace relocl
