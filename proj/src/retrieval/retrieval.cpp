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

#include "relocl/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "relocl/objectives.hpp"

namespace relocl {

namespace {

constexpr std::uint32_t kIndexVersion = 1;
constexpr double kNormFloor = 1e-12;

std::vector<double> inverse_row_norms(const Tensor<float>& h) {
  const std::size_t rows = h.dim(0), cols = h.dim(1);
  const float* p = h.data().data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += static_cast<double>(p[r * cols + c]) * p[r * cols + c];
    out[r] = 1.0 / std::max(std::sqrt(sq), kNormFloor);
  }
  return out;
}

double max_cosine(const Tensor<float>& q, const Tensor<float>& h, const std::vector<double>& inv_norm,
                  const Mask& mask) {
  const std::size_t cols = h.dim(1);
  const float* qp = q.data().data();
  const float* hp = h.data().data();
  double q_sq = 0.0;
  for (std::size_t c = 0; c < cols; ++c) q_sq += static_cast<double>(qp[c]) * qp[c];
  const double inv_q = 1.0 / std::max(std::sqrt(q_sq), kNormFloor);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += static_cast<double>(qp[c]) * hp[r * cols + c];
    best = std::max(best, dot * inv_norm[r] * inv_q);
  }
  return best;
}

bool hit_before(const VideoHit& a, const VideoHit& b) {
  if (a.phi != b.phi) return a.phi > b.phi;
  return a.id < b.id;
}

bool prediction_before(const MomentPrediction& a, const MomentPrediction& b) {
  if (a.delta != b.delta) return a.delta > b.delta;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  if (a.span.start != b.span.start) return a.span.start < b.span.start;
  return a.span.end < b.span.end;
}

}  // namespace

// ---- model loading ----

TrainedModel model_from_checkpoint(const Checkpoint& checkpoint) {
  if (!checkpoint.config.contains("model")) throw ConfigError("checkpoint config has no \"model\" section");
  ModelConfig cfg;
  try {
    cfg = checkpoint.config.at("model").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint model config: ") + e.what());
  }
  TrainedModel out;
  out.model = std::make_unique<ReloclModel<float>>(cfg);
  restore_parameters(checkpoint, out.model->params);
  out.fingerprint = checkpoint_fingerprint(checkpoint);
  out.config = checkpoint.config;
  return out;
}

TrainedModel load_trained_model(const std::filesystem::path& path) { return model_from_checkpoint(load_checkpoint(path)); }

ModularQuery<float> encode_query_vectors(const ReloclModel<float>& model, const QueryAnnotation& query) {
  NoGradGuard no_grad;
  return encode_query(model, query.word_feats, query.word_mask, ForwardContext{}).modular;
}

EncodedVideo<float> encode_video_record(const ReloclModel<float>& model, const VideoRecord& video) {
  NoGradGuard no_grad;
  // A video-only model ignores subtitle features that happen to be present.
  const auto subs = model.config.subtitle_enabled ? video.sub_feats : std::nullopt;
  return encode_video(model, video.vis_feats, subs, video.mask, ForwardContext{});
}

// ---- index ----

IndexEntry::IndexEntry(std::string id_, Mask mask_, Tensor<float> h_v_, std::optional<Tensor<float>> h_s_)
    : id(std::move(id_)), mask(std::move(mask_)), h_v(std::move(h_v_)), h_s(std::move(h_s_)) {
  if (h_v.rank() != 2 || h_v.dim(0) != mask.size()) throw DimensionError("index entry " + id + ": H_v/mask mismatch");
  if (h_s && h_s->shape() != h_v.shape()) throw DimensionError("index entry " + id + ": H_s/H_v mismatch");
  for (auto x : h_v.data())
    if (!std::isfinite(x)) throw NumericError("index entry " + id + ": non-finite value in H_v");
  if (h_s)
    for (auto x : h_s->data())
      if (!std::isfinite(x)) throw NumericError("index entry " + id + ": non-finite value in H_s");
  inv_norm_v = inverse_row_norms(h_v);
  if (h_s) inv_norm_s = inverse_row_norms(*h_s);
}

EncodedVideo<float> IndexEntry::as_encoded() const {
  EncodedVideo<float> v;
  v.hp_v = h_v;
  v.h_v = h_v;
  v.hp_s = h_s;
  v.h_s = h_s;
  v.mask = mask;
  return v;
}

IndexEntry make_index_entry(const std::string& id, const EncodedVideo<float>& encoded) {
  return IndexEntry(id, encoded.mask, encoded.h_v, encoded.h_s);
}

void CorpusIndex::require_fingerprint(const Digest& expected) const {
  if (fingerprint != expected) {
    throw ConfigError("index fingerprint " + to_hex(fingerprint) + " does not match checkpoint " + to_hex(expected));
  }
}

std::vector<std::uint8_t> serialize_index(const CorpusIndex& index) {
  ByteWriter w;
  w.magic("RLCI");
  w.u32(kIndexVersion);
  w.bytes(index.fingerprint);
  w.u32(static_cast<std::uint32_t>(index.entries.size()));
  for (const auto& e : index.entries) {
    if (e.h_v.dim(1) != index.d || e.h_s.has_value() != index.subtitles) {
      throw DimensionError("serialize_index: entry " + e.id + " does not match the index layout");
    }
    w.str(e.id);
    const std::size_t n = e.length();
    w.u32(static_cast<std::uint32_t>(n));
    std::vector<std::uint8_t> bits((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i)
      if (e.mask[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    w.bytes(bits);
    w.f32s(e.h_v.data());
    if (e.h_s) w.f32s(e.h_s->data());
  }
  return w.take();
}

CorpusIndex parse_index(std::span<const std::uint8_t> bytes, std::size_t d, bool subtitles, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic("RLCI");
  if (auto version = r.u32(); version != kIndexVersion) {
    throw DataError(what + ": unsupported index version " + std::to_string(version));
  }
  CorpusIndex index;
  index.d = d;
  index.subtitles = subtitles;
  auto fp = r.bytes(index.fingerprint.size());
  std::copy(fp.begin(), fp.end(), index.fingerprint.begin());
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto id = r.str();
    const std::size_t n = r.u32();
    auto bits = r.bytes((n + 7) / 8);
    Mask mask(n);
    for (std::size_t j = 0; j < n; ++j) mask[j] = (bits[j / 8] >> (j % 8)) & 1u;
    auto read_matrix = [&] {
      std::vector<float> values(n * d);
      r.f32s(values);
      return Tensor<float>::from({n, d}, std::move(values));
    };
    auto h_v = read_matrix();
    std::optional<Tensor<float>> h_s;
    if (subtitles) h_s = read_matrix();
    try {
      index.entries.emplace_back(std::move(id), std::move(mask), std::move(h_v), std::move(h_s));
    } catch (const NumericError& e) {
      throw DataError(what + ": " + e.what());
    }
  }
  if (!r.at_end()) throw DataError(what + ": trailing bytes (stream count or d does not match the model?)");
  return index;
}

void save_index(const std::filesystem::path& path, const CorpusIndex& index) {
  write_file_bytes(path, serialize_index(index));
}

CorpusIndex load_index(const std::filesystem::path& path, std::size_t d, bool subtitles) {
  return parse_index(read_file_bytes(path), d, subtitles, path.string());
}

CorpusIndex build_corpus_index(const ReloclModel<float>& model, const Digest& fingerprint,
                               std::span<const VideoRecord> videos) {
  CorpusIndex index;
  index.fingerprint = fingerprint;
  index.d = model.config.d;
  index.subtitles = model.config.subtitle_enabled;
  index.entries.reserve(videos.size());
  for (const auto& video : videos) {
    index.entries.push_back(make_index_entry(video.id, encode_video_record(model, video)));
  }
  return index;
}

// ---- scoring ----

double video_similarity(const ModularQuery<float>& query, const IndexEntry& entry) {
  const double phi_v = max_cosine(query.q_v, entry.h_v, entry.inv_norm_v, entry.mask);
  if (query.q_s && entry.h_s) {
    return 0.5 * (phi_v + max_cosine(*query.q_s, *entry.h_s, entry.inv_norm_s, entry.mask));
  }
  return phi_v;
}

std::vector<VideoHit> retrieve_videos(const ModularQuery<float>& query, std::span<const IndexEntry> entries,
                                      std::size_t k, std::size_t threads) {
  if (entries.empty()) throw DomainError("retrieve_videos: the index is empty");
  if (k == 0) throw ConfigError("retrieve_videos: K must be at least 1");
  std::vector<VideoHit> hits(entries.size());
  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) hits[i] = {i, entries[i].id, video_similarity(query, entries[i])};
  };
  threads = std::clamp<std::size_t>(threads, 1, entries.size());
  if (threads == 1) {
    score_range(0, entries.size());
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (entries.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk, end = std::min(entries.size(), begin + chunk);
      if (begin < end) workers.emplace_back(score_range, begin, end);
    }
  }
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_before);
  hits.resize(keep);
  return hits;
}

std::vector<SpanCandidate> top_spans(std::span<const float> p_start, std::span<const float> p_end,
                                     std::span<const std::uint8_t> mask, std::size_t top_n, std::size_t l_max) {
  const std::size_t n = mask.size();
  if (p_start.size() != n || p_end.size() != n) throw DimensionError("top_spans: distribution/mask length mismatch");
  if (top_n == 0) throw ConfigError("top_spans: top_n must be at least 1");
  std::vector<SpanCandidate> all;
  for (std::size_t s = 0; s < n; ++s) {
    if (!mask[s]) continue;
    for (std::size_t e = s; e < n && mask[e]; ++e) {
      if (l_max > 0 && e - s + 1 > l_max) break;
      all.push_back({{s, e}, static_cast<double>(p_start[s]) * static_cast<double>(p_end[e])});
    }
  }
  if (all.empty()) throw DomainError("top_spans: no valid clip unit");
  auto before = [](const SpanCandidate& a, const SpanCandidate& b) {
    if (a.p_se != b.p_se) return a.p_se > b.p_se;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.end < b.span.end;
  };
  const std::size_t keep = std::min(top_n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), before);
  all.resize(keep);
  return all;
}

std::vector<SpanCandidate> localize_moments(const ModularQuery<float>& query, const IndexEntry& entry,
                                            const BoundaryPredictorParams<float>& predictor, std::size_t top_n,
                                            std::size_t l_max) {
  NoGradGuard no_grad;
  const auto encoded = entry.as_encoded();
  auto dist = ml_distributions(ml_scores(query, encoded), predictor, entry.mask);
  return top_spans(dist.start.data(), dist.end.data(), entry.mask, top_n, l_max);
}

double moment_score(double p_se, double phi, double gamma) { return p_se * std::exp(gamma * phi); }

std::vector<MomentPrediction> vcmr_rank(const ModularQuery<float>& query, std::span<const IndexEntry> entries,
                                        const BoundaryPredictorParams<float>& predictor,
                                        const RetrievalParams& params) {
  if (!(params.gamma >= 0.0)) throw ConfigError("vcmr_rank: gamma must be non-negative");
  auto hits = retrieve_videos(query, entries, params.k, params.threads);
  std::vector<MomentPrediction> out;
  out.reserve(hits.size() * params.top_n);
  for (const auto& hit : hits) {
    for (const auto& c : localize_moments(query, entries[hit.entry], predictor, params.top_n, params.l_max)) {
      out.push_back({hit.id, c.span, c.p_se, hit.phi, moment_score(c.p_se, hit.phi, params.gamma)});
    }
  }
  std::sort(out.begin(), out.end(), prediction_before);
  return out;
}

// ---- benchmark ----

BenchResult bench_retrieval(const ReloclModel<float>& model, const CorpusIndex& index,
                            std::span<const VideoRecord> videos, std::span<const QueryAnnotation> queries,
                            BenchMode mode, const RetrievalParams& params) {
  if (mode == BenchMode::kReencode && videos.size() != index.entries.size()) {
    throw ConfigError("bench_retrieval: re-encode mode needs the indexed video records");
  }
  BenchResult result;
  result.mode = mode;
  result.threads = params.threads;
  result.queries = queries.size();
  result.rankings.reserve(queries.size());
  const auto start = std::chrono::steady_clock::now();
  for (const auto& q : queries) {
    const auto query = encode_query_vectors(model, q);
    if (mode == BenchMode::kPrecomputed) {
      result.rankings.push_back(vcmr_rank(query, index.entries, model.boundary, params));
    } else {
      std::vector<IndexEntry> fresh;
      fresh.reserve(videos.size());
      for (const auto& video : videos) fresh.push_back(make_index_entry(video.id, encode_video_record(model, video)));
      result.rankings.push_back(vcmr_rank(query, fresh, model.boundary, params));
    }
  }
  result.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.mean_seconds = queries.empty() ? 0.0 : result.total_seconds / static_cast<double>(queries.size());
  return result;
}

}  // namespace relocl
