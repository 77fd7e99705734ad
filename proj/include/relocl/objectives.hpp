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

#include <optional>
#include <vector>

#include "json.hpp"
#include "relocl/encoders.hpp"
#include "relocl/span.hpp"

namespace relocl {

// ---- video retrieval -------------------------------------------------------

// Cosine between q [d] and every row of h [n × d]; padded entries are -inf.
// Zero-norm vectors are normalized by max(||.||, 1e-12).
template <typename T>
Tensor<T> vr_frame_scores(const Tensor<T>& q, const Tensor<T>& h, std::span<const std::uint8_t> mask);

// phi: per-stream max over valid frames, averaged over the available streams.
template <typename T>
Tensor<T> vr_similarity(const ModularQuery<T>& query, const EncodedVideo<T>& video);

// max(0, margin + mean(query_negs) - pos) + max(0, margin + mean(video_negs) - pos)
template <typename T>
Tensor<T> vr_hinge_loss(const Tensor<T>& positive, const Tensor<T>& query_negatives, const Tensor<T>& video_negatives,
                        T margin);

// ---- moment localization ---------------------------------------------------

// S = H^T q' per stream (plain dot products), averaged over streams.
template <typename T>
Tensor<T> ml_scores(const ModularQuery<T>& query, const EncodedVideo<T>& video);

template <typename T>
struct BoundaryDistributions {
  Tensor<T> start;
  Tensor<T> end;
};

// Softmax over valid positions of the start/end boundary scores.
template <typename T>
BoundaryDistributions<T> ml_distributions(const Tensor<T>& scores, const BoundaryPredictorParams<T>& predictor,
                                          std::span<const std::uint8_t> mask);

// ½(-log P_start[i_s] - log P_end[i_e]) from probabilities.
template <typename T>
Tensor<T> ml_loss(const Tensor<T>& p_start, const Tensor<T>& p_end, std::span<const std::uint8_t> mask,
                  MomentSpan gold);

// Same value computed from the boundary logits via log-sum-exp; this is the
// form used in training.
template <typename T>
Tensor<T> ml_loss_from_scores(const Tensor<T>& start_scores, const Tensor<T>& end_scores,
                              std::span<const std::uint8_t> mask, MomentSpan gold);

// ---- contrastive objectives --------------------------------------------------

// log(Σ_P e^x / (Σ_P e^x + Σ_N e^x)) over flat entries of `logits`.
template <typename T>
Tensor<T> nce_score(const Tensor<T>& logits, std::span<const std::size_t> positives,
                    std::span<const std::size_t> negatives);

// -NCE score for one stream. Row i of pooled_videos / queries belongs to
// anchor i; pairs (i, j) with different video ids are the negatives.
template <typename T>
Tensor<T> video_cl_loss(const std::vector<Tensor<T>>& pooled_videos, const std::vector<Tensor<T>>& queries,
                        std::span<const std::size_t> video_ids, const ContrastiveHeads<T>& heads);

// Jensen-Shannon MI lower bound: mean_F[-sp(-C)] - mean_B[sp(C)]. An empty
// background contributes 0.
template <typename T>
Tensor<T> jsd_mutual_information(const Tensor<T>& foreground, const std::optional<Tensor<T>>& background);

// Discriminator scores C(q, h_i) = qᵀ W h_i for every row of h.
template <typename T>
Tensor<T> discriminator_scores(const Tensor<T>& q, const Tensor<T>& h, const Tensor<T>& w);

// -I for one stream, foreground = rows gold.start..gold.end of hp.
template <typename T>
Tensor<T> frame_cl_loss(const Tensor<T>& q, const Tensor<T>& hp, std::span<const std::uint8_t> mask,
                        MomentSpan gold, const ContrastiveHeads<T>& heads);

// ---- totals ------------------------------------------------------------------

struct ObjectiveGates {
  bool vr = true;
  bool ml = true;
  bool video_cl = true;
  bool frame_cl = true;

  bool operator==(const ObjectiveGates&) const = default;
};

void to_json(nlohmann::json& j, const ObjectiveGates& g);
void from_json(const nlohmann::json& j, ObjectiveGates& g);

// Unweighted components plus the weighted total.
struct LossReport {
  double vr = 0.0;
  double ml = 0.0;
  double video_cl = 0.0;
  double frame_cl = 0.0;
  double total = 0.0;
};

void to_json(nlohmann::json& j, const LossReport& r);

// λ1·L_VR + λ2·L_ML + λ3·L_VideoCL + λ4·L_FrameCL over the gated components.
// Throws NumericError when a gated component is not finite.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& vr, const Tensor<T>& ml, const Tensor<T>& video_cl, const Tensor<T>& frame_cl,
                     const std::array<double, 4>& lambda, const ObjectiveGates& gates);

// Everything one optimization step needs, already materialized as tensors.
template <typename T>
struct TrainingInputs {
  std::vector<Tensor<T>> query_feats;  // per anchor, [n_q × d_w]
  std::vector<Mask> query_masks;
  std::vector<Tensor<T>> video_feats;  // per distinct video, [n_v × d_v]
  std::vector<std::optional<Tensor<T>>> sub_feats;
  std::vector<Mask> video_masks;
  std::vector<std::size_t> anchor_video;  // anchor -> index into video_feats
  std::vector<MomentSpan> spans;
  // Anchors whose queries serve as negatives for anchor i's video, and
  // videos that serve as negatives for anchor i's query.
  std::vector<std::vector<std::size_t>> query_negatives;
  std::vector<std::vector<std::size_t>> video_negatives;
};

template <typename T>
struct BatchLoss {
  Tensor<T> vr, ml, video_cl, frame_cl;
  Tensor<T> total;
  LossReport report;
};

template <typename T>
BatchLoss<T> batch_loss(const ReloclModel<T>& model, const TrainingInputs<T>& inputs, const ObjectiveGates& gates,
                        const ForwardContext& ctx);

}  // namespace relocl
