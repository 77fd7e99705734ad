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

#include "relocl/encoders.hpp"

namespace relocl {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d == 0 || d_v == 0 || d_w == 0) fail("dimensions must be positive");
  if (heads == 0 || d % heads != 0) fail("d must be divisible by heads");
  if (d_ff == 0) fail("d_ff must be positive");
  if (n_v_max == 0 || n_q_max == 0) fail("sequence limits must be positive");
  if (conv_width % 2 == 0) fail("conv_width must be odd");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (margin < 0.0) fail("margin must be non-negative");
  for (double l : lambda)
    if (l < 0.0) fail("loss weights must be non-negative");
  if (top_k == 0 || top_n == 0 || l_max == 0) fail("top_k, top_n and l_max must be >= 1");
  if (n_neg == 0) fail("n_neg must be >= 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_v", c.d_v},
                     {"d_w", c.d_w},
                     {"d", c.d},
                     {"n_v_max", c.n_v_max},
                     {"n_q_max", c.n_q_max},
                     {"heads", c.heads},
                     {"d_ff", c.d_ff},
                     {"conv_width", c.conv_width},
                     {"dropout", c.dropout},
                     {"margin", c.margin},
                     {"lambda", c.lambda},
                     {"gamma", c.gamma},
                     {"top_k", c.top_k},
                     {"top_n", c.top_n},
                     {"l_max", c.l_max},
                     {"n_neg", c.n_neg},
                     {"subtitle_enabled", c.subtitle_enabled},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig defaults;
  c.d_v = j.value("d_v", defaults.d_v);
  c.d_w = j.value("d_w", defaults.d_w);
  c.d = j.value("d", defaults.d);
  c.n_v_max = j.value("n_v_max", defaults.n_v_max);
  c.n_q_max = j.value("n_q_max", defaults.n_q_max);
  c.heads = j.value("heads", defaults.heads);
  c.d_ff = j.value("d_ff", defaults.d_ff);
  c.conv_width = j.value("conv_width", defaults.conv_width);
  c.dropout = j.value("dropout", defaults.dropout);
  c.margin = j.value("margin", defaults.margin);
  c.lambda = j.value("lambda", defaults.lambda);
  c.gamma = j.value("gamma", defaults.gamma);
  c.top_k = j.value("top_k", defaults.top_k);
  c.top_n = j.value("top_n", defaults.top_n);
  c.l_max = j.value("l_max", defaults.l_max);
  c.n_neg = j.value("n_neg", defaults.n_neg);
  c.subtitle_enabled = j.value("subtitle_enabled", defaults.subtitle_enabled);
  c.seed = j.value("seed", defaults.seed);
}

ModelConfig desk_profile() { return ModelConfig{}; }

ModelConfig paper_profile() {
  ModelConfig c;
  c.d_v = 3072;
  c.d_w = 768;
  c.d = 384;
  c.n_v_max = 128;
  c.n_q_max = 30;
  c.d_ff = 4 * c.d;
  return c;
}

template <typename T>
ReloclModel<T>::ReloclModel(const ModelConfig& cfg) : config(cfg) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const auto d = config.d;
  const bool subs = config.subtitle_enabled;
  auto block = [&](const std::string& name) {
    return TransformerBlockParams<T>::create(params, name, d, config.heads, config.d_ff, rng);
  };

  query_proj = Linear<T>::create(params, "query.proj", config.d_w, d, rng);
  query_pos = PositionalTable<T>::create(params, "query.pos", config.n_q_max, d, rng);
  query_blocks[0] = block("query.block0");
  query_blocks[1] = block("query.block1");
  query_pool_v = AdditivePoolParams<T>::create(params, "query.pool_v", d, rng);
  query_reproj_v = Linear<T>::create(params, "query.reproj_v", d, d, rng);
  if (subs) {
    query_pool_s = AdditivePoolParams<T>::create(params, "query.pool_s", d, rng);
    query_reproj_s = Linear<T>::create(params, "query.reproj_s", d, d, rng);
  }

  video_proj = Linear<T>::create(params, "video.proj", config.d_v, d, rng);
  video_pos = PositionalTable<T>::create(params, "video.pos", config.n_v_max, d, rng);
  video_self = block("video.self");
  video_cross = block("video.cross");
  video_final = block("video.final");
  if (subs) {
    sub_proj = Linear<T>::create(params, "sub.proj", config.d_w, d, rng);
    sub_pos = PositionalTable<T>::create(params, "sub.pos", config.n_v_max, d, rng);
    sub_self = block("sub.self");
    sub_cross = block("sub.cross");
    sub_final = block("sub.final");
  }

  boundary = BoundaryPredictorParams<T>::create(params, "boundary", config.conv_width, rng);

  auto make_heads = [&](const std::string& name) {
    ContrastiveHeads<T> h;
    h.video_pool = AdditivePoolParams<T>::create(params, name + ".video_pool", d, rng);
    h.video_map = Linear<T>::create(params, name + ".f", d, d, rng);
    h.query_map = Linear<T>::create(params, name + ".g", d, d, rng);
    std::normal_distribution<double> dist(0.0, 1.0 / static_cast<double>(d));
    std::vector<T> w(d * d);
    for (auto& v : w) v = static_cast<T>(dist(rng));
    h.discriminator = params.add(name + ".disc", Tensor<T>::from({d, d}, std::move(w)));
    return h;
  };
  heads_v = make_heads("contrast_v");
  if (subs) heads_s = make_heads("contrast_s");
}

template <typename T>
QueryEncoding<T> encode_query(const ReloclModel<T>& model, const Tensor<T>& word_feats,
                              std::span<const std::uint8_t> mask, const ForwardContext& ctx) {
  const auto& cfg = model.config;
  if (word_feats.rank() != 2 || word_feats.dim(1) != cfg.d_w) {
    throw DimensionError("encode_query: expected [n_q x " + std::to_string(cfg.d_w) + "], got " +
                         shape_str(word_feats.shape()));
  }
  if (mask.size() != word_feats.dim(0)) throw DimensionError("encode_query: mask length mismatch");
  if (count_valid(mask) == 0) throw DomainError("encode_query: empty query");

  auto x = ctx.drop(add_positional(model.query_proj(word_feats), model.query_pos));
  for (const auto& block : model.query_blocks) x = transformer_block(x, mask, block, ctx);

  QueryEncoding<T> out;
  out.contextual = x;
  out.modular.q_v = additive_pool(x, mask, model.query_pool_v);
  out.modular.qp_v = model.query_reproj_v(out.modular.q_v);
  if (cfg.subtitle_enabled) {
    out.modular.q_s = additive_pool(x, mask, model.query_pool_s);
    out.modular.qp_s = model.query_reproj_s(*out.modular.q_s);
  }
  return out;
}

template <typename T>
EncodedVideo<T> encode_video(const ReloclModel<T>& model, const Tensor<T>& vis_feats,
                             const std::optional<Tensor<T>>& sub_feats, std::span<const std::uint8_t> mask,
                             const ForwardContext& ctx) {
  const auto& cfg = model.config;
  if (vis_feats.rank() != 2 || vis_feats.dim(1) != cfg.d_v) {
    throw DimensionError("encode_video: expected [n_v x " + std::to_string(cfg.d_v) + "], got " +
                         shape_str(vis_feats.shape()));
  }
  const std::size_t n = vis_feats.dim(0);
  if (mask.size() != n) throw DimensionError("encode_video: mask length mismatch");
  if (count_valid(mask) == 0) throw DomainError("encode_video: video has no valid clip units");
  if (cfg.subtitle_enabled != sub_feats.has_value()) {
    throw ConfigError(cfg.subtitle_enabled ? "encode_video: model expects subtitle features"
                                           : "encode_video: model has no subtitle stream");
  }

  EncodedVideo<T> out;
  out.mask.assign(mask.begin(), mask.end());
  auto v = ctx.drop(add_positional(model.video_proj(vis_feats), model.video_pos));
  v = transformer_block(v, mask, model.video_self, ctx);
  if (sub_feats) {
    if (sub_feats->rank() != 2 || sub_feats->dim(0) != n) {
      throw DataError("encode_video: subtitle stream length " + shape_str(sub_feats->shape()) +
                      " does not match visual length " + std::to_string(n));
    }
    if (sub_feats->dim(1) != cfg.d_w) throw DimensionError("encode_video: subtitle feature dim mismatch");
    auto s = ctx.drop(add_positional(model.sub_proj(*sub_feats), model.sub_pos));
    s = transformer_block(s, mask, model.sub_self, ctx);
    out.hp_v = co_attention_block(v, s, mask, model.video_cross, ctx);
    out.hp_s = co_attention_block(s, v, mask, model.sub_cross, ctx);
    out.h_s = transformer_block(*out.hp_s, mask, model.sub_final, ctx);
  } else {
    out.hp_v = co_attention_block(v, v, mask, model.video_cross, ctx);
  }
  out.h_v = transformer_block(out.hp_v, mask, model.video_final, ctx);
  return out;
}

template struct ReloclModel<float>;
template struct ReloclModel<double>;
template QueryEncoding<float> encode_query(const ReloclModel<float>&, const Tensor<float>&,
                                           std::span<const std::uint8_t>, const ForwardContext&);
template QueryEncoding<double> encode_query(const ReloclModel<double>&, const Tensor<double>&,
                                            std::span<const std::uint8_t>, const ForwardContext&);
template EncodedVideo<float> encode_video(const ReloclModel<float>&, const Tensor<float>&,
                                          const std::optional<Tensor<float>>&, std::span<const std::uint8_t>,
                                          const ForwardContext&);
template EncodedVideo<double> encode_video(const ReloclModel<double>&, const Tensor<double>&,
                                           const std::optional<Tensor<double>>&, std::span<const std::uint8_t>,
                                           const ForwardContext&);

}  // namespace relocl
