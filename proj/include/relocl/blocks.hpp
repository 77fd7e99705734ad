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

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "relocl/ops.hpp"
#include "relocl/optim.hpp"

// Layers the encoders are assembled from. Sequences are [n × d] row-major:
// one row per position, so a column of the usual d × n notation is a row here.
namespace relocl {

// Dropout switch and randomness for one forward pass.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  template <typename T>
  Tensor<T> drop(const Tensor<T>& x) const {
    if (!training || dropout == 0.0) return x;
    return relocl::dropout(x, dropout, true, *rng);
  }
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in × out]
  Tensor<T> bias;    // [out]

  static Linear create(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> bias;

  static LayerNormParams create(ParameterSet<T>& params, const std::string& name, std::size_t d);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct AttentionParams {
  Linear<T> query, key, value, output;
  std::size_t heads = 1;

  static AttentionParams create(ParameterSet<T>& params, const std::string& name, std::size_t d, std::size_t heads,
                                std::mt19937_64& rng);
};

template <typename T>
struct TransformerBlockParams {
  AttentionParams<T> attention;
  LayerNormParams<T> attention_norm;
  Linear<T> ff_in;   // d -> d_ff
  Linear<T> ff_out;  // d_ff -> d
  LayerNormParams<T> ff_norm;

  static TransformerBlockParams create(ParameterSet<T>& params, const std::string& name, std::size_t d,
                                       std::size_t heads, std::size_t d_ff, std::mt19937_64& rng);
};

template <typename T>
struct AdditivePoolParams {
  Tensor<T> score;  // [d], the 1 × d scoring row

  static AdditivePoolParams create(ParameterSet<T>& params, const std::string& name, std::size_t d,
                                   std::mt19937_64& rng);
};

template <typename T>
struct PositionalTable {
  Tensor<T> table;  // [n_max × d]

  static PositionalTable create(ParameterSet<T>& params, const std::string& name, std::size_t n_max, std::size_t d,
                                std::mt19937_64& rng);
};

template <typename T>
struct BoundaryPredictorParams {
  Tensor<T> start_kernel;  // [1 × 1 × width]
  Tensor<T> end_kernel;

  static BoundaryPredictorParams create(ParameterSet<T>& params, const std::string& name, std::size_t width,
                                        std::mt19937_64& rng);
};

// Scaled dot-product attention with `heads` heads over the valid rows of
// kv_in. If `weights` is non-null it receives the per-head [n_q × n_kv]
// attention matrices.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& kv_in, std::span<const std::uint8_t> kv_mask,
                               const AttentionParams<T>& params, std::vector<Tensor<T>>* weights = nullptr);

// Post-norm block: Y = LN(X + MHA(X, Y_kv)); Z = LN(Y + FFN(Y)), FFN with ReLU.
template <typename T>
Tensor<T> co_attention_block(const Tensor<T>& x, const Tensor<T>& y, std::span<const std::uint8_t> y_mask,
                             const TransformerBlockParams<T>& params, const ForwardContext& ctx);

// Self-attention form of the block above.
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, std::span<const std::uint8_t> mask,
                            const TransformerBlockParams<T>& params, const ForwardContext& ctx);

// Softmax-weighted average of the valid rows of h, weights from h · score.
template <typename T>
Tensor<T> additive_pool(const Tensor<T>& h, std::span<const std::uint8_t> mask, const AdditivePoolParams<T>& params,
                        Tensor<T>* weights = nullptr);

template <typename T>
Tensor<T> add_positional(const Tensor<T>& x, const PositionalTable<T>& table);

// Start/end boundary scores from a length-n similarity sequence. Padded
// entries of `scores` are zeroed before the convolution so they cannot leak
// into valid positions; consumers apply the mask again in their softmax.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> predict_boundaries(const Tensor<T>& scores, std::span<const std::uint8_t> mask,
                                                   const BoundaryPredictorParams<T>& params);

// Copies values between parameter sets of different precision, matching by
// name and shape.
template <typename From, typename To>
void copy_parameters(const ParameterSet<From>& from, ParameterSet<To>& to);

}  // namespace relocl
