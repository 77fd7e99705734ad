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

#include <random>

#include "relocl/encoders.hpp"
#include "relocl/objectives.hpp"

namespace relocl::testing {

inline ModelConfig tiny_config(bool subtitles = true) {
  ModelConfig c;
  c.d_v = 6;
  c.d_w = 5;
  c.d = 8;
  c.n_v_max = 12;
  c.n_q_max = 6;
  c.heads = 2;
  c.d_ff = 12;
  c.dropout = 0.0;
  c.subtitle_enabled = subtitles;
  c.seed = 3;
  c.validate();
  return c;
}

template <typename T>
Tensor<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<T> v(rows * cols);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from({rows, cols}, std::move(v));
}

template <typename T>
Tensor<T> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  return reshape(random_matrix<T>(1, n, rng, scale), {n});
}

inline Mask prefix_mask(std::size_t n, std::size_t valid) {
  Mask m(n, 0);
  for (std::size_t i = 0; i < valid; ++i) m[i] = 1;
  return m;
}

// Overwrites rows whose mask entry is 0 with fresh noise.
template <typename T>
Tensor<T> scramble_padding(const Tensor<T>& x, const Mask& mask, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 50.0);
  std::vector<T> v(x.data().begin(), x.data().end());
  const std::size_t cols = x.dim(1);
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (!mask[r])
      for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] = static_cast<T>(dist(rng));
  return Tensor<T>::from(x.shape(), std::move(v));
}

// A small batch: 4 anchors over 3 videos with padded sequences.
template <typename T>
TrainingInputs<T> tiny_batch(const ModelConfig& c, std::mt19937_64& rng) {
  TrainingInputs<T> in;
  const std::size_t video_len[] = {7, 10, 5};
  for (std::size_t v = 0; v < 3; ++v) {
    in.video_feats.push_back(random_matrix<T>(c.n_v_max, c.d_v, rng));
    if (c.subtitle_enabled) in.sub_feats.push_back(random_matrix<T>(c.n_v_max, c.d_w, rng));
    else in.sub_feats.push_back(std::nullopt);
    in.video_masks.push_back(prefix_mask(c.n_v_max, video_len[v]));
  }
  const std::size_t query_len[] = {3, 6, 4, 2};
  in.anchor_video = {0, 1, 2, 1};
  in.spans = {{1, 3}, {4, 8}, {0, 4}, {2, 2}};
  for (std::size_t i = 0; i < 4; ++i) {
    in.query_feats.push_back(random_matrix<T>(c.n_q_max, c.d_w, rng));
    in.query_masks.push_back(prefix_mask(c.n_q_max, query_len[i]));
  }
  in.query_negatives = {{1, 2, 3}, {0, 2}, {0, 1, 3}, {0, 2}};
  in.video_negatives = {{1, 2}, {0, 2}, {0, 1}, {0, 2}};
  return in;
}

}  // namespace relocl::testing
