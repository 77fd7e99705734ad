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

#include "relocl/objectives.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace relocl {

namespace {

void check_span(std::span<const std::uint8_t> mask, MomentSpan gold, const char* where) {
  if (gold.start > gold.end || gold.end >= mask.size()) {
    throw DataError(std::string(where) + ": gold span out of range");
  }
  for (std::size_t i = gold.start; i <= gold.end; ++i) {
    if (!mask[i]) throw DataError(std::string(where) + ": gold span covers a padded position");
  }
}

std::vector<std::size_t> valid_indices(std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

template <typename T>
Tensor<T> stream_average(const Tensor<T>& v, const std::optional<Tensor<T>>& s) {
  return s ? scale(add(v, *s), T(0.5)) : v;
}

template <typename T>
Tensor<T> mean_of(const std::vector<Tensor<T>>& scalars) {
  return mean(stack(scalars));
}

}  // namespace

template <typename T>
Tensor<T> vr_frame_scores(const Tensor<T>& q, const Tensor<T>& h, std::span<const std::uint8_t> mask) {
  if (q.rank() != 1 || h.rank() != 2 || h.dim(1) != q.dim(0)) {
    throw DimensionError("vr_frame_scores: expected q[d] and h[n x d]");
  }
  const T eps = static_cast<T>(1e-12);
  auto cosines = matmul(l2_normalize_rows(h, eps), l2_normalize_rows(q, eps));
  return masked_fill(cosines, mask, -std::numeric_limits<T>::infinity());
}

template <typename T>
Tensor<T> vr_similarity(const ModularQuery<T>& query, const EncodedVideo<T>& video) {
  auto phi_v = masked_max(vr_frame_scores(query.q_v, video.h_v, video.mask), video.mask);
  std::optional<Tensor<T>> phi_s;
  if (query.q_s && video.h_s) phi_s = masked_max(vr_frame_scores(*query.q_s, *video.h_s, video.mask), video.mask);
  return stream_average(phi_v, phi_s);
}

template <typename T>
Tensor<T> vr_hinge_loss(const Tensor<T>& positive, const Tensor<T>& query_negatives, const Tensor<T>& video_negatives,
                        T margin) {
  auto hinge = [&](const Tensor<T>& negatives) { return relu(add_scalar(sub(mean(negatives), positive), margin)); };
  return add(hinge(query_negatives), hinge(video_negatives));
}

template <typename T>
Tensor<T> ml_scores(const ModularQuery<T>& query, const EncodedVideo<T>& video) {
  auto s_v = matmul(video.h_v, query.qp_v);
  std::optional<Tensor<T>> s_s;
  if (query.qp_s && video.h_s) s_s = matmul(*video.h_s, *query.qp_s);
  return stream_average(s_v, s_s);
}

template <typename T>
BoundaryDistributions<T> ml_distributions(const Tensor<T>& scores, const BoundaryPredictorParams<T>& predictor,
                                          std::span<const std::uint8_t> mask) {
  auto [start, end] = predict_boundaries(scores, mask, predictor);
  return {masked_softmax(start, mask), masked_softmax(end, mask)};
}

template <typename T>
Tensor<T> ml_loss(const Tensor<T>& p_start, const Tensor<T>& p_end, std::span<const std::uint8_t> mask,
                  MomentSpan gold) {
  check_span(mask, gold, "ml_loss");
  const std::size_t s[] = {gold.start};
  const std::size_t e[] = {gold.end};
  auto nll = add(log(gather(p_start, s)), log(gather(p_end, e)));
  return scale(sum(nll), T(-0.5));
}

template <typename T>
Tensor<T> ml_loss_from_scores(const Tensor<T>& start_scores, const Tensor<T>& end_scores,
                              std::span<const std::uint8_t> mask, MomentSpan gold) {
  check_span(mask, gold, "ml_loss");
  auto valid = valid_indices(mask);
  auto nll = [&](const Tensor<T>& scores, std::size_t gold_index) {
    const std::size_t idx[] = {gold_index};
    return sub(logsumexp(gather(scores, valid)), sum(gather(scores, idx)));
  };
  return scale(add(nll(start_scores, gold.start), nll(end_scores, gold.end)), T(0.5));
}

template <typename T>
Tensor<T> nce_score(const Tensor<T>& logits, std::span<const std::size_t> positives,
                    std::span<const std::size_t> negatives) {
  if (positives.empty()) throw ConfigError("nce_score: no positive pairs");
  if (negatives.empty()) throw ConfigError("nce_score: no negative pairs (batch needs at least two videos)");
  std::vector<std::size_t> all(positives.begin(), positives.end());
  all.insert(all.end(), negatives.begin(), negatives.end());
  return sub(logsumexp(gather(logits, positives)), logsumexp(gather(logits, all)));
}

template <typename T>
Tensor<T> video_cl_loss(const std::vector<Tensor<T>>& pooled_videos, const std::vector<Tensor<T>>& queries,
                        std::span<const std::size_t> video_ids, const ContrastiveHeads<T>& heads) {
  const std::size_t batch = queries.size();
  if (pooled_videos.size() != batch || video_ids.size() != batch) {
    throw DimensionError("video_cl_loss: pooled videos, queries and ids must align");
  }
  if (batch < 2) throw ConfigError("video_cl_loss: batch of size 1 has no negatives");
  auto f = heads.video_map(stack(pooled_videos));
  auto g = heads.query_map(stack(queries));
  auto logits = matmul(g, transpose(f));  // [query i, video j]
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < batch; ++j) {
      if (i == j) positives.push_back(i * batch + j);
      else if (video_ids[i] != video_ids[j]) negatives.push_back(i * batch + j);
    }
  return neg(nce_score(logits, positives, negatives));
}

template <typename T>
Tensor<T> jsd_mutual_information(const Tensor<T>& foreground, const std::optional<Tensor<T>>& background) {
  auto positive_term = mean(neg(softplus(neg(foreground))));
  if (!background) return positive_term;
  return sub(positive_term, mean(softplus(*background)));
}

template <typename T>
Tensor<T> discriminator_scores(const Tensor<T>& q, const Tensor<T>& h, const Tensor<T>& w) {
  return matmul(h, matmul(q, w));
}

template <typename T>
Tensor<T> frame_cl_loss(const Tensor<T>& q, const Tensor<T>& hp, std::span<const std::uint8_t> mask,
                        MomentSpan gold, const ContrastiveHeads<T>& heads) {
  if (hp.rank() != 2 || mask.size() != hp.dim(0)) throw DimensionError("frame_cl_loss: mask length mismatch");
  check_span(mask, gold, "frame_cl_loss");
  std::vector<std::size_t> fg, bg;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    (i >= gold.start && i <= gold.end ? fg : bg).push_back(i);
  }
  if (fg.empty()) throw DataError("frame_cl_loss: empty foreground");
  auto scores = discriminator_scores(q, hp, heads.discriminator);
  std::optional<Tensor<T>> background;
  if (!bg.empty()) background = gather(scores, bg);
  return neg(jsd_mutual_information(gather(scores, fg), background));
}

void to_json(nlohmann::json& j, const ObjectiveGates& g) {
  j = nlohmann::json{{"vr", g.vr}, {"ml", g.ml}, {"video_cl", g.video_cl}, {"frame_cl", g.frame_cl}};
}

void from_json(const nlohmann::json& j, ObjectiveGates& g) {
  g.vr = j.value("vr", true);
  g.ml = j.value("ml", true);
  g.video_cl = j.value("video_cl", true);
  g.frame_cl = j.value("frame_cl", true);
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"l_vr", r.vr}, {"l_ml", r.ml}, {"l_videocl", r.video_cl}, {"l_framecl", r.frame_cl},
                     {"l_total", r.total}};
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& vr, const Tensor<T>& ml, const Tensor<T>& video_cl, const Tensor<T>& frame_cl,
                     const std::array<double, 4>& lambda, const ObjectiveGates& gates) {
  const std::array<const Tensor<T>*, 4> parts{&vr, &ml, &video_cl, &frame_cl};
  const std::array<bool, 4> enabled{gates.vr, gates.ml, gates.video_cl, gates.frame_cl};
  static constexpr const char* kNames[] = {"L_VR", "L_ML", "L_VideoCL", "L_FrameCL"};
  if (!gates.vr && !gates.ml) throw ConfigError("at least one of the VR and ML objectives must be enabled");
  Tensor<T> total;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!enabled[i]) continue;
    if (!std::isfinite(parts[i]->item())) throw NumericError(std::string(kNames[i]) + " is not finite");
    auto term = scale(*parts[i], static_cast<T>(lambda[i]));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
BatchLoss<T> batch_loss(const ReloclModel<T>& model, const TrainingInputs<T>& in, const ObjectiveGates& gates,
                        const ForwardContext& ctx) {
  const std::size_t batch = in.query_feats.size();
  if (batch == 0) throw ConfigError("batch_loss: empty batch");
  if (in.query_masks.size() != batch || in.anchor_video.size() != batch || in.spans.size() != batch ||
      in.query_negatives.size() != batch || in.video_negatives.size() != batch) {
    throw DimensionError("batch_loss: per-anchor inputs do not align");
  }

  std::vector<EncodedVideo<T>> videos;
  videos.reserve(in.video_feats.size());
  for (std::size_t v = 0; v < in.video_feats.size(); ++v) {
    videos.push_back(encode_video(model, in.video_feats[v], in.sub_feats[v], in.video_masks[v], ctx));
  }
  std::vector<ModularQuery<T>> queries;
  queries.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    queries.push_back(encode_query(model, in.query_feats[i], in.query_masks[i], ctx).modular);
  }

  BatchLoss<T> out;
  // Components whose gate is off are still evaluated for the report, but
  // without recording a graph.

  {
    std::optional<NoGradGuard> guard;
    if (!gates.vr) guard.emplace();
    std::vector<Tensor<T>> per_anchor;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& video = videos[in.anchor_video[i]];
      if (in.query_negatives[i].empty() || in.video_negatives[i].empty()) {
        throw ConfigError("batch_loss: anchor " + std::to_string(i) + " has an empty VR negative set");
      }
      std::vector<Tensor<T>> qneg, vneg;
      for (auto j : in.query_negatives[i]) qneg.push_back(vr_similarity(queries[j], video));
      for (auto k : in.video_negatives[i]) vneg.push_back(vr_similarity(queries[i], videos[k]));
      per_anchor.push_back(vr_hinge_loss(vr_similarity(queries[i], video), stack(qneg), stack(vneg),
                                         static_cast<T>(model.config.margin)));
    }
    out.vr = mean_of(per_anchor);
  }
  {
    std::optional<NoGradGuard> guard;
    if (!gates.ml) guard.emplace();
    std::vector<Tensor<T>> per_anchor;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& video = videos[in.anchor_video[i]];
      auto [start, end] = predict_boundaries(ml_scores(queries[i], video), video.mask, model.boundary);
      per_anchor.push_back(ml_loss_from_scores(start, end, video.mask, in.spans[i]));
    }
    out.ml = mean_of(per_anchor);
  }
  {
    std::optional<NoGradGuard> guard;
    if (!gates.video_cl) guard.emplace();
    auto stream_loss = [&](bool subtitle) {
      const auto& heads = subtitle ? model.heads_s : model.heads_v;
      std::vector<Tensor<T>> pooled_by_video;
      for (const auto& video : videos) {
        pooled_by_video.push_back(additive_pool(subtitle ? *video.hp_s : video.hp_v, video.mask, heads.video_pool));
      }
      std::vector<Tensor<T>> pooled, qs;
      for (std::size_t i = 0; i < batch; ++i) {
        pooled.push_back(pooled_by_video[in.anchor_video[i]]);
        qs.push_back(subtitle ? *queries[i].q_s : queries[i].q_v);
      }
      return video_cl_loss(pooled, qs, in.anchor_video, heads);
    };
    auto loss_v = stream_loss(false);
    out.video_cl = model.config.subtitle_enabled ? scale(add(loss_v, stream_loss(true)), T(0.5)) : loss_v;
  }
  {
    std::optional<NoGradGuard> guard;
    if (!gates.frame_cl) guard.emplace();
    std::vector<Tensor<T>> per_anchor;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& video = videos[in.anchor_video[i]];
      auto loss_v = frame_cl_loss(queries[i].q_v, video.hp_v, video.mask, in.spans[i], model.heads_v);
      if (model.config.subtitle_enabled) {
        auto loss_s = frame_cl_loss(*queries[i].q_s, *video.hp_s, video.mask, in.spans[i], model.heads_s);
        loss_v = scale(add(loss_v, loss_s), T(0.5));
      }
      per_anchor.push_back(loss_v);
    }
    out.frame_cl = mean_of(per_anchor);
  }

  out.total = total_loss(out.vr, out.ml, out.video_cl, out.frame_cl, model.config.lambda, gates);
  out.report = {static_cast<double>(out.vr.item()), static_cast<double>(out.ml.item()),
                static_cast<double>(out.video_cl.item()), static_cast<double>(out.frame_cl.item()),
                static_cast<double>(out.total.item())};
  return out;
}

#define RELOCL_INSTANTIATE_OBJECTIVES(T)                                                                            \
  template Tensor<T> vr_frame_scores(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>);           \
  template Tensor<T> vr_similarity(const ModularQuery<T>&, const EncodedVideo<T>&);                                \
  template Tensor<T> vr_hinge_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                      \
  template Tensor<T> ml_scores(const ModularQuery<T>&, const EncodedVideo<T>&);                                    \
  template BoundaryDistributions<T> ml_distributions(const Tensor<T>&, const BoundaryPredictorParams<T>&,         \
                                                     std::span<const std::uint8_t>);                                \
  template Tensor<T> ml_loss(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>, MomentSpan);       \
  template Tensor<T> ml_loss_from_scores(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>,       \
                                         MomentSpan);                                                               \
  template Tensor<T> nce_score(const Tensor<T>&, std::span<const std::size_t>, std::span<const std::size_t>);      \
  template Tensor<T> video_cl_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,                   \
                                   std::span<const std::size_t>, const ContrastiveHeads<T>&);                      \
  template Tensor<T> jsd_mutual_information(const Tensor<T>&, const std::optional<Tensor<T>>&);                   \
  template Tensor<T> discriminator_scores(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> frame_cl_loss(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>, MomentSpan, \
                                   const ContrastiveHeads<T>&);                                                     \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                const std::array<double, 4>&, const ObjectiveGates&);                               \
  template BatchLoss<T> batch_loss(const ReloclModel<T>&, const TrainingInputs<T>&, const ObjectiveGates&,        \
                                   const ForwardContext&);

RELOCL_INSTANTIATE_OBJECTIVES(float)
RELOCL_INSTANTIATE_OBJECTIVES(double)

}  // namespace relocl
