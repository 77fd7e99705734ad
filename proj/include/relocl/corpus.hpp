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
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "relocl/objectives.hpp"
#include "relocl/ops.hpp"
#include "relocl/span.hpp"
#include "relocl/tensor.hpp"

namespace relocl {

// ---- time <-> clip-unit index ----

// floor(tau / duration * n_v) clamped to [0, n_v - 1].
std::size_t time_to_index(double tau, double duration, std::size_t n_v);

// Clip units are half-open time bins, so the end index is taken just before
// tau_e. The result always satisfies start <= end.
MomentSpan times_to_span(double tau_s, double tau_e, double duration, std::size_t n_v);

// ---- records ----

// Features are stored padded to a fixed row count; `mask` marks the real
// clip units, which always form a prefix.
struct VideoRecord {
  std::string id;
  double duration = 0.0;
  Tensor<float> vis_feats;                // [n_pad × d_v]
  std::optional<Tensor<float>> sub_feats;  // [n_pad × d_w]
  Mask mask;

  std::size_t length() const { return count_valid(mask); }
};

struct QueryAnnotation {
  std::string query_id;
  std::string video_id;
  Tensor<float> word_feats;  // [n_q_pad × d_w]
  Mask word_mask;
  double tau_s = 0.0;
  double tau_e = 0.0;
  MomentSpan span;

  std::size_t length() const { return count_valid(word_mask); }
};

struct Splits {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

void to_json(nlohmann::json& j, const Splits& s);
void from_json(const nlohmann::json& j, Splits& s);

class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<VideoRecord> videos, std::vector<QueryAnnotation> queries, Splits splits);

  const std::vector<VideoRecord>& videos() const { return videos_; }
  const std::vector<QueryAnnotation>& queries() const { return queries_; }
  const Splits& splits() const { return splits_; }

  // Throws DataError for unknown ids.
  std::size_t video_index(const std::string& id) const;
  const VideoRecord& video(const std::string& id) const { return videos_[video_index(id)]; }

  // Indices into videos()/queries() restricted to one split ("train" or "val").
  std::vector<std::size_t> split_videos(const std::string& split) const;
  std::vector<std::size_t> split_queries(const std::string& split) const;

  bool has_subtitles() const { return !videos_.empty() && videos_.front().sub_feats.has_value(); }

 private:
  std::vector<VideoRecord> videos_;
  std::vector<QueryAnnotation> queries_;
  Splits splits_;
  std::unordered_map<std::string, std::size_t> video_lookup_;
};

// ---- feature files ----

enum class FeatureRole : std::uint8_t { kVideo = 0, kSubtitle = 1, kQuery = 2 };

// A block of equally shaped [rows × cols] float matrices.
struct FeatureFile {
  FeatureRole role = FeatureRole::kVideo;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<Tensor<float>> items;
};

std::vector<std::uint8_t> serialize_features(const FeatureFile& file);
// `what` names the source in error messages.
FeatureFile parse_features(std::span<const std::uint8_t> bytes, const std::string& what);

// Directory layout: videos.rlcf, subtitles.rlcf (optional), queries.rlcf,
// videos.jsonl, annotations.jsonl, splits.json.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

// ---- synthetic generation ----

struct SyntheticSpec {
  std::size_t train_videos = 64;
  std::size_t val_videos = 32;
  std::size_t n_v_min = 24;
  std::size_t n_v_max = 48;  // also the padded length
  std::size_t n_q_min = 6;
  std::size_t n_q_max = 16;
  std::size_t n_q_pad = 32;
  std::size_t d_v = 96;
  std::size_t d_w = 48;
  std::size_t latent = 32;
  std::size_t moments_min = 1;
  std::size_t moments_max = 5;
  double span_min_frac = 0.05;
  double span_max_frac = 0.40;
  double signal = 1.0;
  double noise = 1.0;
  double clip_seconds = 1.5;
  // Planted query directions are redrawn while their cosine with an earlier
  // one exceeds this bound (best effort for very large corpora).
  double max_direction_cosine = 0.5;
  bool subtitles = true;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

struct SyntheticCorpus {
  Corpus corpus;
  // Planted unit direction of each query in visual feature space, aligned
  // with corpus.queries().
  std::vector<std::vector<float>> planted_visual;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// Scores every video for every query of `split` by max cosine between the
// planted direction and the video's frames, and returns VR Recall@1.
double planted_oracle_recall_at_1(const SyntheticCorpus& data, const std::string& split);

// ---- batching ----

struct TrainingBatch {
  std::vector<std::size_t> anchors;  // indices into corpus.queries()
  std::vector<std::size_t> videos;   // distinct corpus.videos() indices
  std::vector<std::size_t> anchor_video;  // anchor -> position in `videos`
  std::vector<std::vector<std::size_t>> query_negatives;  // anchor positions
  std::vector<std::vector<std::size_t>> video_negatives;  // positions in `videos`
};

// One epoch of shuffled batches over `query_indices`. A trailing batch of a
// single anchor is folded into the previous one, and batches that would hold a
// single distinct video exchange anchors with a neighbour when possible.
std::vector<TrainingBatch> make_batches(const Corpus& corpus, std::span<const std::size_t> query_indices,
                                        std::size_t batch_size, std::size_t n_neg, std::uint64_t seed,
                                        std::uint64_t epoch);

template <typename T>
TrainingInputs<T> to_training_inputs(const Corpus& corpus, const TrainingBatch& batch);

}  // namespace relocl
