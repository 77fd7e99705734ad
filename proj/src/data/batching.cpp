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

#include <algorithm>
#include <random>

#include "relocl/corpus.hpp"

namespace relocl {

namespace {

std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t count,
                                                    std::mt19937_64& rng) {
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::size_t distinct_videos(const Corpus& corpus, const std::vector<std::size_t>& anchors) {
  std::vector<std::size_t> ids;
  for (auto a : anchors) ids.push_back(corpus.video_index(corpus.queries()[a].video_id));
  std::sort(ids.begin(), ids.end());
  return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

// Swaps an anchor of a single-video chunk with one from another chunk so both
// keep at least two distinct videos. Leaves the chunk alone if impossible.
void repair_single_video_chunks(const Corpus& corpus, std::vector<std::vector<std::size_t>>& chunks) {
  auto video_of = [&](std::size_t a) { return corpus.video_index(corpus.queries()[a].video_id); };
  for (std::size_t b = 0; b < chunks.size(); ++b) {
    if (chunks[b].size() < 2 || distinct_videos(corpus, chunks[b]) >= 2) continue;
    const std::size_t own = video_of(chunks[b].front());
    bool fixed = false;
    for (std::size_t c = 0; c < chunks.size() && !fixed; ++c) {
      if (c == b) continue;
      for (auto& candidate : chunks[c]) {
        if (video_of(candidate) == own) continue;
        std::swap(candidate, chunks[b].front());
        if (distinct_videos(corpus, chunks[c]) >= 2 || chunks[c].size() < 2) {
          fixed = true;
          break;
        }
        std::swap(candidate, chunks[b].front());
      }
    }
  }
}

}  // namespace

std::vector<TrainingBatch> make_batches(const Corpus& corpus, std::span<const std::size_t> query_indices,
                                        std::size_t batch_size, std::size_t n_neg, std::uint64_t seed,
                                        std::uint64_t epoch) {
  if (batch_size < 2) throw ConfigError("make_batches: batch size must be at least 2");
  if (n_neg == 0) throw ConfigError("make_batches: N_neg must be positive");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x62u};
  std::mt19937_64 rng(seq);

  std::vector<std::size_t> order(query_indices.begin(), query_indices.end());
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> chunks;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    chunks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  if (chunks.size() >= 2 && chunks.back().size() == 1) {
    chunks[chunks.size() - 2].push_back(chunks.back().front());
    chunks.pop_back();
  }
  repair_single_video_chunks(corpus, chunks);

  std::vector<TrainingBatch> batches;
  batches.reserve(chunks.size());
  for (const auto& chunk : chunks) {
    TrainingBatch batch;
    batch.anchors = chunk;
    for (auto a : chunk) {
      const std::size_t v = corpus.video_index(corpus.queries()[a].video_id);
      auto it = std::find(batch.videos.begin(), batch.videos.end(), v);
      if (it == batch.videos.end()) {
        batch.anchor_video.push_back(batch.videos.size());
        batch.videos.push_back(v);
      } else {
        batch.anchor_video.push_back(static_cast<std::size_t>(it - batch.videos.begin()));
      }
    }
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::vector<std::size_t> query_pool, video_pool;
      for (std::size_t j = 0; j < chunk.size(); ++j)
        if (batch.anchor_video[j] != batch.anchor_video[i]) query_pool.push_back(j);
      for (std::size_t k = 0; k < batch.videos.size(); ++k)
        if (k != batch.anchor_video[i]) video_pool.push_back(k);
      batch.query_negatives.push_back(sample_without_replacement(std::move(query_pool), n_neg, rng));
      batch.video_negatives.push_back(sample_without_replacement(std::move(video_pool), n_neg, rng));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

template <typename T>
TrainingInputs<T> to_training_inputs(const Corpus& corpus, const TrainingBatch& batch) {
  TrainingInputs<T> in;
  for (auto a : batch.anchors) {
    const auto& q = corpus.queries()[a];
    in.query_feats.push_back(q.word_feats.cast<T>());
    in.query_masks.push_back(q.word_mask);
    in.spans.push_back(q.span);
  }
  for (auto v : batch.videos) {
    const auto& video = corpus.videos()[v];
    in.video_feats.push_back(video.vis_feats.cast<T>());
    if (video.sub_feats) in.sub_feats.push_back(video.sub_feats->cast<T>());
    else in.sub_feats.push_back(std::nullopt);
    in.video_masks.push_back(video.mask);
  }
  in.anchor_video = batch.anchor_video;
  in.query_negatives = batch.query_negatives;
  in.video_negatives = batch.video_negatives;
  return in;
}

template TrainingInputs<float> to_training_inputs(const Corpus&, const TrainingBatch&);
template TrainingInputs<double> to_training_inputs(const Corpus&, const TrainingBatch&);

}  // namespace relocl
