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

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "relocl/tensor.hpp"

namespace relocl {

// 1 marks a valid position, 0 a padded one.
using Mask = std::vector<std::uint8_t>;

std::size_t count_valid(std::span<const std::uint8_t> mask);

// Linear algebra. Rank-1 operands are promoted: a left vector acts as a row,
// a right vector as a column, and the promoted axis is dropped again.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T> Tensor<T> neg(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
// log(1 + e^x), evaluated without overflow for large |x|.
template <typename T> Tensor<T> softplus(const Tensor<T>& a);

// x[m×n] + b[n] on every row.
template <typename T> Tensor<T> add_row_vector(const Tensor<T>& x, const Tensor<T>& b);

// Reductions to a scalar.
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> logsumexp(const Tensor<T>& a);
// Max over valid positions of a rank-1 tensor. The gradient goes to the
// first index attaining the max.
template <typename T> Tensor<T> masked_max(const Tensor<T>& a, std::span<const std::uint8_t> mask);

// Softmax of a rank-1 tensor over valid positions; padded outputs are 0.
template <typename T> Tensor<T> masked_softmax(const Tensor<T>& x, std::span<const std::uint8_t> mask);
// Row-wise masked softmax of x[m×n]; the mask is over the n columns.
template <typename T> Tensor<T> masked_softmax_rows(const Tensor<T>& x, std::span<const std::uint8_t> mask);

// Row-wise normalization of x[m×n] (or rank-1 x[n]) to zero mean and unit
// population variance, then gain/bias of shape [n].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

// Each row divided by max(||row||, eps).
template <typename T> Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps);

// Cross-correlation of x[c_in×n] with kernels[c_out×c_in×w], zero padded so
// the output is [c_out×n]. w must be odd.
template <typename T> Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernels);

// Inverted dropout; identity when !training or rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, std::mt19937_64& rng);

// Shape manipulation.
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
// Stacks same-shaped tensors along a new leading axis.
template <typename T> Tensor<T> stack(const std::vector<Tensor<T>>& parts);
// Picks flat elements by index.
template <typename T> Tensor<T> gather(const Tensor<T>& a, std::span<const std::size_t> indices);
// Zeroes the rows of x[m×n] (or entries of x[m]) whose mask is 0.
template <typename T> Tensor<T> zero_masked_rows(const Tensor<T>& x, std::span<const std::uint8_t> mask);

// Rank-1 x with padded entries replaced by `value` (no gradient flows to them).
template <typename T> Tensor<T> masked_fill(const Tensor<T>& x, std::span<const std::uint8_t> mask, T value);

}  // namespace relocl
