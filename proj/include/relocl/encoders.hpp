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

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "relocl/blocks.hpp"

namespace relocl {

// Hyperparameters of the whole model, including the inference knobs that are
// stored alongside the weights.
struct ModelConfig {
  std::size_t d_v = 96;
  std::size_t d_w = 48;
  std::size_t d = 64;
  std::size_t n_v_max = 48;
  std::size_t n_q_max = 32;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  std::size_t conv_width = 5;
  double dropout = 0.1;
  double margin = 0.1;
  std::array<double, 4> lambda{1.0, 0.01, 0.01, 0.01};  // VR, ML, VideoCL, FrameCL
  double gamma = 30.0;
  std::size_t top_k = 100;
  std::size_t top_n = 10;
  std::size_t l_max = 16;
  std::size_t n_neg = 10;
  bool subtitle_enabled = true;
  std::uint64_t seed = 1;

  // Throws ConfigError on inconsistent values.
  void validate() const;
  std::size_t streams() const { return subtitle_enabled ? 2 : 1; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Desk-scale defaults (the struct defaults) versus the published TVR sizes.
ModelConfig desk_profile();
ModelConfig paper_profile();

// Projection heads used only by the contrastive objectives, one set per
// stream: f for pooled video, g for the query, and a bilinear discriminator.
template <typename T>
struct ContrastiveHeads {
  AdditivePoolParams<T> video_pool;
  Linear<T> video_map;  // f
  Linear<T> query_map;  // g
  Tensor<T> discriminator;  // [d × d]
};

template <typename T>
struct ReloclModel {
  explicit ReloclModel(const ModelConfig& config);
  ReloclModel(const ReloclModel&) = delete;
  ReloclModel& operator=(const ReloclModel&) = delete;

  ModelConfig config;
  ParameterSet<T> params;

  Linear<T> query_proj;
  PositionalTable<T> query_pos;
  std::array<TransformerBlockParams<T>, 2> query_blocks;
  AdditivePoolParams<T> query_pool_v, query_pool_s;
  Linear<T> query_reproj_v, query_reproj_s;

  Linear<T> video_proj, sub_proj;
  PositionalTable<T> video_pos, sub_pos;
  TransformerBlockParams<T> video_self, sub_self;
  TransformerBlockParams<T> video_cross, sub_cross;
  TransformerBlockParams<T> video_final, sub_final;

  BoundaryPredictorParams<T> boundary;
  ContrastiveHeads<T> heads_v, heads_s;
};

// Pooled sentence vectors per stream (q_m) and their localization
// re-projections (q'_m = W_m q_m + b_m). The s entries exist iff subtitles
// are enabled.
template <typename T>
struct ModularQuery {
  Tensor<T> q_v;
  std::optional<Tensor<T>> q_s;
  Tensor<T> qp_v;
  std::optional<Tensor<T>> qp_s;
};

template <typename T>
struct QueryEncoding {
  Tensor<T> contextual;  // [n_q × d]
  ModularQuery<T> modular;
};

// Cross-modal (hp_*) and final (h_*) representations, each [n_v × d].
template <typename T>
struct EncodedVideo {
  Tensor<T> hp_v;
  std::optional<Tensor<T>> hp_s;
  Tensor<T> h_v;
  std::optional<Tensor<T>> h_s;
  Mask mask;

  std::size_t length() const { return mask.size(); }
};

// word_feats: [n_q × d_w].
template <typename T>
QueryEncoding<T> encode_query(const ReloclModel<T>& model, const Tensor<T>& word_feats,
                              std::span<const std::uint8_t> mask, const ForwardContext& ctx);

// vis_feats: [n_v × d_v]; sub_feats: [n_v × d_w] when subtitles are enabled.
template <typename T>
EncodedVideo<T> encode_video(const ReloclModel<T>& model, const Tensor<T>& vis_feats,
                             const std::optional<Tensor<T>>& sub_feats, std::span<const std::uint8_t> mask,
                             const ForwardContext& ctx);

}  // namespace relocl
