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

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "relocl/byte_io.hpp"
#include "relocl/checkpoint.hpp"
#include "relocl/corpus.hpp"
#include "relocl/encoders.hpp"
#include "relocl/span.hpp"

namespace relocl {

// ---- model loading ----

// A checkpoint's config JSON holds the model config under "model".
struct TrainedModel {
  std::unique_ptr<ReloclModel<float>> model;
  Digest fingerprint{};
  nlohmann::json config;
};

TrainedModel model_from_checkpoint(const Checkpoint& checkpoint);
TrainedModel load_trained_model(const std::filesystem::path& path);

// Evaluation-mode query encoding, no graph recorded.
ModularQuery<float> encode_query_vectors(const ReloclModel<float>& model, const QueryAnnotation& query);
EncodedVideo<float> encode_video_record(const ReloclModel<float>& model, const VideoRecord& video);

// ---- index ----

// Final video representations H_m, one row per clip unit.
struct IndexEntry {
  std::string id;
  Mask mask;
  Tensor<float> h_v;
  std::optional<Tensor<float>> h_s;
  // Reciprocal row norms (floored at 1e-12), derived on construction.
  std::vector<double> inv_norm_v, inv_norm_s;

  IndexEntry() = default;
  IndexEntry(std::string id, Mask mask, Tensor<float> h_v, std::optional<Tensor<float>> h_s);
  std::size_t length() const { return mask.size(); }
  EncodedVideo<float> as_encoded() const;
};

IndexEntry make_index_entry(const std::string& id, const EncodedVideo<float>& encoded);

struct CorpusIndex {
  Digest fingerprint{};
  std::size_t d = 0;
  bool subtitles = false;
  std::vector<IndexEntry> entries;

  // Throws ConfigError when the index was built from different weights.
  void require_fingerprint(const Digest& expected) const;
};

// File layout: "RLCI" | u32 version | 32-byte fingerprint | u32 count |
// per entry: str id | u32 n_v | ceil(n_v/8) mask bytes (LSB first) |
// f32 H_v [n_v × d] | f32 H_s [n_v × d] when the model has subtitles.
// d and the stream count are not stored; they come from the model config.
std::vector<std::uint8_t> serialize_index(const CorpusIndex& index);
CorpusIndex parse_index(std::span<const std::uint8_t> bytes, std::size_t d, bool subtitles,
                        const std::string& what = "index");
void save_index(const std::filesystem::path& path, const CorpusIndex& index);
CorpusIndex load_index(const std::filesystem::path& path, std::size_t d, bool subtitles);

CorpusIndex build_corpus_index(const ReloclModel<float>& model, const Digest& fingerprint,
                               std::span<const VideoRecord> videos);

// ---- scoring ----

// phi: per-stream max cosine over valid clip units, averaged over streams.
double video_similarity(const ModularQuery<float>& query, const IndexEntry& entry);

struct VideoHit {
  std::size_t entry = 0;  // position in the index
  std::string id;
  double phi = 0.0;
};

// Exact top-K by phi, descending; ties go to the smaller video id. `threads`
// > 1 splits the scoring over worker threads; the result does not depend on it.
std::vector<VideoHit> retrieve_videos(const ModularQuery<float>& query, std::span<const IndexEntry> entries,
                                      std::size_t k, std::size_t threads = 1);

struct SpanCandidate {
  MomentSpan span;
  double p_se = 0.0;
};

// Top-n spans by P_start[i_s]·P_end[i_e] over valid positions with
// i_s <= i_e and length <= l_max (l_max = 0 disables the cap). Ties go to
// the earlier start, then the earlier end.
std::vector<SpanCandidate> top_spans(std::span<const float> p_start, std::span<const float> p_end,
                                     std::span<const std::uint8_t> mask, std::size_t top_n, std::size_t l_max);

std::vector<SpanCandidate> localize_moments(const ModularQuery<float>& query, const IndexEntry& entry,
                                            const BoundaryPredictorParams<float>& predictor, std::size_t top_n,
                                            std::size_t l_max);

struct MomentPrediction {
  std::string video_id;
  MomentSpan span;
  double p_se = 0.0;
  double phi = 0.0;
  double delta = 0.0;
};

struct RetrievalParams {
  std::size_t k = 100;
  std::size_t top_n = 10;
  std::size_t l_max = 16;
  double gamma = 30.0;
  std::size_t threads = 1;
};

// delta = P_se · exp(gamma · phi)
double moment_score(double p_se, double phi, double gamma);

// Full two-stage ranking: top-K videos, top-n spans each, merged by delta
// (ties: video id, then start, then end).
std::vector<MomentPrediction> vcmr_rank(const ModularQuery<float>& query, std::span<const IndexEntry> entries,
                                        const BoundaryPredictorParams<float>& predictor,
                                        const RetrievalParams& params);

// ---- benchmark ----

enum class BenchMode { kPrecomputed, kReencode };

struct BenchResult {
  BenchMode mode = BenchMode::kPrecomputed;
  std::size_t threads = 1;
  std::size_t queries = 0;
  double total_seconds = 0.0;
  double mean_seconds = 0.0;
  std::vector<std::vector<MomentPrediction>> rankings;
};

// Precomputed mode scores against `index`; re-encode mode runs encode_video
// for every (query, video) pair before scoring, as a cross-modal model must.
BenchResult bench_retrieval(const ReloclModel<float>& model, const CorpusIndex& index,
                            std::span<const VideoRecord> videos, std::span<const QueryAnnotation> queries,
                            BenchMode mode, const RetrievalParams& params);

}  // namespace relocl
