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

#include "relocl/blocks.hpp"

#include <cmath>

namespace relocl {

namespace {

// Draws in double and casts so float and double models built from the same
// seed start from the same point.
template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(values));
}

}  // namespace

template <typename T>
Linear<T> Linear<T>::create(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                            std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Linear layer;
  layer.weight = params.add(name + ".weight", uniform_tensor<T>({in, out}, bound, rng));
  layer.bias = params.add(name + ".bias", Tensor<T>::zeros({out}), false);
  return layer;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return add_row_vector(matmul(x, weight), bias);
}

template <typename T>
LayerNormParams<T> LayerNormParams<T>::create(ParameterSet<T>& params, const std::string& name, std::size_t d) {
  LayerNormParams ln;
  ln.gain = params.add(name + ".gain", Tensor<T>::full({d}, T(1)), false);
  ln.bias = params.add(name + ".bias", Tensor<T>::zeros({d}), false);
  return ln;
}

template <typename T>
Tensor<T> LayerNormParams<T>::operator()(const Tensor<T>& x) const {
  return layer_norm(x, gain, bias, static_cast<T>(1e-5));
}

template <typename T>
AttentionParams<T> AttentionParams<T>::create(ParameterSet<T>& params, const std::string& name, std::size_t d,
                                              std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model dim " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  AttentionParams attn;
  attn.query = Linear<T>::create(params, name + ".query", d, d, rng);
  attn.key = Linear<T>::create(params, name + ".key", d, d, rng);
  attn.value = Linear<T>::create(params, name + ".value", d, d, rng);
  attn.output = Linear<T>::create(params, name + ".output", d, d, rng);
  attn.heads = heads;
  return attn;
}

template <typename T>
TransformerBlockParams<T> TransformerBlockParams<T>::create(ParameterSet<T>& params, const std::string& name,
                                                            std::size_t d, std::size_t heads, std::size_t d_ff,
                                                            std::mt19937_64& rng) {
  TransformerBlockParams block;
  block.attention = AttentionParams<T>::create(params, name + ".attention", d, heads, rng);
  block.attention_norm = LayerNormParams<T>::create(params, name + ".attention_norm", d);
  block.ff_in = Linear<T>::create(params, name + ".ff_in", d, d_ff, rng);
  block.ff_out = Linear<T>::create(params, name + ".ff_out", d_ff, d, rng);
  block.ff_norm = LayerNormParams<T>::create(params, name + ".ff_norm", d);
  return block;
}

template <typename T>
AdditivePoolParams<T> AdditivePoolParams<T>::create(ParameterSet<T>& params, const std::string& name, std::size_t d,
                                                    std::mt19937_64& rng) {
  return {params.add(name + ".score", normal_tensor<T>({d}, 0.02, rng))};
}

template <typename T>
PositionalTable<T> PositionalTable<T>::create(ParameterSet<T>& params, const std::string& name, std::size_t n_max,
                                              std::size_t d, std::mt19937_64& rng) {
  return {params.add(name + ".table", normal_tensor<T>({n_max, d}, 0.02, rng))};
}

template <typename T>
BoundaryPredictorParams<T> BoundaryPredictorParams<T>::create(ParameterSet<T>& params, const std::string& name,
                                                              std::size_t width, std::mt19937_64& rng) {
  if (width % 2 == 0) throw ConfigError("boundary predictor kernel width must be odd");
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  BoundaryPredictorParams predictor;
  predictor.start_kernel = params.add(name + ".start_kernel", uniform_tensor<T>({1, 1, width}, bound, rng));
  predictor.end_kernel = params.add(name + ".end_kernel", uniform_tensor<T>({1, 1, width}, bound, rng));
  return predictor;
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& kv_in, std::span<const std::uint8_t> kv_mask,
                               const AttentionParams<T>& params, std::vector<Tensor<T>>* weights) {
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.dim(1) != kv_in.dim(1)) {
    throw DimensionError("multi_head_attention: inputs must share model dim, got " + shape_str(q_in.shape()) +
                         " and " + shape_str(kv_in.shape()));
  }
  if (kv_mask.size() != kv_in.dim(0)) throw DimensionError("multi_head_attention: mask length mismatch");
  const std::size_t d = q_in.dim(1);
  const std::size_t head_dim = d / params.heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(head_dim));

  auto queries = params.query(q_in);
  auto keys = params.key(kv_in);
  auto values = params.value(kv_in);
  std::vector<Tensor<T>> heads;
  heads.reserve(params.heads);
  if (weights) weights->clear();
  for (std::size_t h = 0; h < params.heads; ++h) {
    auto qh = slice_cols(queries, h * head_dim, head_dim);
    auto kh = slice_cols(keys, h * head_dim, head_dim);
    auto vh = slice_cols(values, h * head_dim, head_dim);
    auto scores = scale(matmul(qh, transpose(kh)), scale_factor);
    auto attn = masked_softmax_rows(scores, kv_mask);
    if (weights) weights->push_back(attn);
    heads.push_back(matmul(attn, vh));
  }
  auto merged = params.heads == 1 ? heads.front() : concat_cols(heads);
  return params.output(merged);
}

template <typename T>
Tensor<T> co_attention_block(const Tensor<T>& x, const Tensor<T>& y, std::span<const std::uint8_t> y_mask,
                             const TransformerBlockParams<T>& params, const ForwardContext& ctx) {
  auto attended = ctx.drop(multi_head_attention(x, y, y_mask, params.attention));
  auto mid = params.attention_norm(add(x, attended));
  auto ff = ctx.drop(params.ff_out(relu(params.ff_in(mid))));
  return params.ff_norm(add(mid, ff));
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, std::span<const std::uint8_t> mask,
                            const TransformerBlockParams<T>& params, const ForwardContext& ctx) {
  return co_attention_block(x, x, mask, params, ctx);
}

template <typename T>
Tensor<T> additive_pool(const Tensor<T>& h, std::span<const std::uint8_t> mask, const AdditivePoolParams<T>& params,
                        Tensor<T>* weights) {
  if (h.rank() != 2) throw DimensionError("additive_pool: expected [n x d], got " + shape_str(h.shape()));
  if (count_valid(mask) == 0) throw DomainError("additive_pool: empty sequence");
  auto alpha = masked_softmax(matmul(h, params.score), mask);
  if (weights) *weights = alpha;
  return matmul(alpha, h);
}

template <typename T>
Tensor<T> add_positional(const Tensor<T>& x, const PositionalTable<T>& table) {
  const std::size_t n = x.dim(0);
  if (n > table.table.dim(0)) {
    throw ConfigError("sequence length " + std::to_string(n) + " exceeds positional table size " +
                      std::to_string(table.table.dim(0)));
  }
  return add(x, slice_rows(table.table, 0, n));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> predict_boundaries(const Tensor<T>& scores, std::span<const std::uint8_t> mask,
                                                   const BoundaryPredictorParams<T>& params) {
  if (scores.rank() != 1) throw DimensionError("predict_boundaries: expected a score vector");
  const std::size_t n = scores.dim(0);
  auto row = reshape(zero_masked_rows(scores, mask), {1, n});
  auto start = reshape(conv1d(row, params.start_kernel), {n});
  auto end = reshape(conv1d(row, params.end_kernel), {n});
  return {start, end};
}

template <typename From, typename To>
void copy_parameters(const ParameterSet<From>& from, ParameterSet<To>& to) {
  for (auto& item : to.items()) {
    const auto* src = from.find(item.name);
    if (!src || src->tensor.shape() != item.tensor.shape()) {
      throw ConfigError("copy_parameters: no matching source for " + item.name);
    }
    auto dst = item.tensor.mutable_data();
    auto values = src->tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<To>(values[i]);
  }
}

#define RELOCL_INSTANTIATE_BLOCKS(T)                                                                              \
  template struct Linear<T>;                                                                                      \
  template struct LayerNormParams<T>;                                                                             \
  template struct AttentionParams<T>;                                                                             \
  template struct TransformerBlockParams<T>;                                                                      \
  template struct AdditivePoolParams<T>;                                                                          \
  template struct PositionalTable<T>;                                                                             \
  template struct BoundaryPredictorParams<T>;                                                                     \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>,     \
                                          const AttentionParams<T>&, std::vector<Tensor<T>>*);                    \
  template Tensor<T> co_attention_block(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>,       \
                                        const TransformerBlockParams<T>&, const ForwardContext&);                 \
  template Tensor<T> transformer_block(const Tensor<T>&, std::span<const std::uint8_t>,                          \
                                       const TransformerBlockParams<T>&, const ForwardContext&);                  \
  template Tensor<T> additive_pool(const Tensor<T>&, std::span<const std::uint8_t>, const AdditivePoolParams<T>&, \
                                   Tensor<T>*);                                                                   \
  template Tensor<T> add_positional(const Tensor<T>&, const PositionalTable<T>&);                                \
  template std::pair<Tensor<T>, Tensor<T>> predict_boundaries(const Tensor<T>&, std::span<const std::uint8_t>,   \
                                                              const BoundaryPredictorParams<T>&);

RELOCL_INSTANTIATE_BLOCKS(float)
RELOCL_INSTANTIATE_BLOCKS(double)

template void copy_parameters(const ParameterSet<float>&, ParameterSet<double>&);
template void copy_parameters(const ParameterSet<double>&, ParameterSet<float>&);
template void copy_parameters(const ParameterSet<float>&, ParameterSet<float>&);

}  // namespace relocl
