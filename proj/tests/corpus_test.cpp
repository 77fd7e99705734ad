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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "relocl/byte_io.hpp"
#include "relocl/corpus.hpp"

namespace relocl {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("relocl_corpus_test_" + name);
  fs::remove_all(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.train_videos = 12;
  s.val_videos = 4;
  s.seed = 7;
  return s;
}

std::vector<std::uint8_t> dir_bytes(const fs::path& dir) {
  std::vector<std::uint8_t> all;
  for (const char* name : {"videos.rlcf", "subtitles.rlcf", "queries.rlcf", "videos.jsonl", "annotations.jsonl",
                           "splits.json"}) {
    auto bytes = read_file_bytes(dir / name);
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return all;
}

TEST(TimeToIndex, Examples) {
  EXPECT_EQ(time_to_index(0.0, 120.0, 128), 0u);
  EXPECT_EQ(time_to_index(120.0, 120.0, 128), 127u);
  EXPECT_EQ(time_to_index(60.0, 120.0, 128), 64u);
  EXPECT_THROW(time_to_index(-0.1, 120.0, 128), DataError);
  EXPECT_THROW(time_to_index(120.5, 120.0, 128), DataError);
}

TEST(TimeToIndex, MonotoneInTime) {
  std::size_t prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double tau = 37.0 * i / 1000.0;
    const auto idx = time_to_index(tau, 37.0, 29);
    EXPECT_GE(idx, prev);
    prev = idx;
  }
}

TEST(TimesToSpan, EndOnBinBoundaryStaysInPreviousBin) {
  EXPECT_EQ(times_to_span(2.0, 5.0, 10.0, 10), (MomentSpan{2, 4}));
  EXPECT_EQ(times_to_span(2.0, 2.01, 10.0, 10), (MomentSpan{2, 2}));
  EXPECT_EQ(times_to_span(9.5, 10.0, 10.0, 10), (MomentSpan{9, 9}));
  EXPECT_THROW(times_to_span(3.0, 3.0, 10.0, 10), DataError);
}

TEST(SyntheticCorpus, CountsAndAnnotationContracts) {
  auto spec = small_spec();
  auto data = generate_synthetic_corpus(spec);
  const auto& c = data.corpus;
  ASSERT_EQ(c.videos().size(), 16u);
  EXPECT_EQ(c.splits().train.size(), 12u);
  EXPECT_EQ(c.splits().val.size(), 4u);
  std::set<std::string> train(c.splits().train.begin(), c.splits().train.end());
  for (const auto& id : c.splits().val) EXPECT_FALSE(train.count(id));

  std::map<std::string, int> per_video;
  for (const auto& q : c.queries()) {
    const auto& v = c.video(q.video_id);
    const auto n = v.length();
    ++per_video[q.video_id];
    EXPECT_LE(q.span.start, q.span.end);
    for (std::size_t i = q.span.start; i <= q.span.end; ++i) EXPECT_TRUE(v.mask[i]);
    const double frac = static_cast<double>(q.span.length()) / static_cast<double>(n);
    EXPECT_GE(q.span.length(), std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.05 * n))));
    EXPECT_LE(frac, 0.40 + 1e-12);
    EXPECT_GE(q.tau_s, 0.0);
    EXPECT_GT(q.tau_e, q.tau_s);
    EXPECT_LE(q.tau_e, v.duration);
    EXPECT_EQ(times_to_span(q.tau_s, q.tau_e, v.duration, n), q.span);
    EXPECT_GE(q.length(), spec.n_q_min);
    EXPECT_LE(q.length(), spec.n_q_max);
  }
  EXPECT_EQ(per_video.size(), 16u);
  for (const auto& [id, count] : per_video) {
    EXPECT_GE(count, 1);
    EXPECT_LE(count, 5);
  }
}

TEST(SyntheticCorpus, ForegroundCarriesThePlantedDirection) {
  auto spec = small_spec();
  auto data = generate_synthetic_corpus(spec);
  double fg_sum = 0, bg_sum = 0;
  std::size_t fg_n = 0, bg_n = 0;
  for (std::size_t qi = 0; qi < data.corpus.queries().size(); ++qi) {
    const auto& q = data.corpus.queries()[qi];
    const auto& v = data.corpus.video(q.video_id);
    const auto& dir = data.planted_visual[qi];
    for (std::size_t r = 0; r < v.length(); ++r) {
      double d = 0, n = 0;
      for (std::size_t c = 0; c < spec.d_v; ++c) {
        d += v.vis_feats.at(r, c) * dir[c];
        n += v.vis_feats.at(r, c) * v.vis_feats.at(r, c);
      }
      const double cosine = d / std::sqrt(n);
      if (r >= q.span.start && r <= q.span.end) {
        fg_sum += cosine;
        ++fg_n;
      } else {
        bg_sum += cosine;
        ++bg_n;
      }
    }
  }
  EXPECT_GE(fg_sum / fg_n - bg_sum / bg_n, spec.signal / 2);
}

TEST(SyntheticCorpus, PlantedOracleRetrievesEveryGoldVideo) {
  auto data = generate_synthetic_corpus(small_spec());
  EXPECT_EQ(planted_oracle_recall_at_1(data, "train"), 1.0);
  EXPECT_EQ(planted_oracle_recall_at_1(data, "val"), 1.0);
  auto desk = generate_synthetic_corpus(SyntheticSpec{});
  EXPECT_EQ(planted_oracle_recall_at_1(desk, "train"), 1.0);
  EXPECT_EQ(planted_oracle_recall_at_1(desk, "val"), 1.0);
}

TEST(SyntheticCorpus, SameSeedSameBytes) {
  auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  save_corpus(generate_synthetic_corpus(small_spec()).corpus, a);
  save_corpus(generate_synthetic_corpus(small_spec()).corpus, b);
  EXPECT_EQ(dir_bytes(a), dir_bytes(b));
  auto other = small_spec();
  other.seed = 8;
  auto c = scratch_dir("det_c");
  save_corpus(generate_synthetic_corpus(other).corpus, c);
  EXPECT_NE(dir_bytes(a), dir_bytes(c));
}

TEST(SyntheticCorpus, InfeasibleSpecIsConfigError) {
  auto s = small_spec();
  s.span_max_frac = 1.5;
  EXPECT_THROW(generate_synthetic_corpus(s), ConfigError);
  s = small_spec();
  s.signal = 0.0;
  EXPECT_THROW(generate_synthetic_corpus(s), ConfigError);
  s = small_spec();
  s.n_v_min = 60;
  EXPECT_THROW(generate_synthetic_corpus(s), ConfigError);
}

TEST(CorpusFiles, SaveLoadSaveIsByteIdentical) {
  auto a = scratch_dir("rt_a"), b = scratch_dir("rt_b");
  auto original = generate_synthetic_corpus(small_spec()).corpus;
  save_corpus(original, a);
  auto loaded = load_corpus(a);
  save_corpus(loaded, b);
  EXPECT_EQ(dir_bytes(a), dir_bytes(b));
  ASSERT_EQ(loaded.queries().size(), original.queries().size());
  EXPECT_EQ(loaded.queries()[3].span, original.queries()[3].span);
  EXPECT_EQ(loaded.videos()[5].mask, original.videos()[5].mask);
}

TEST(CorpusFiles, TruncatedFeatureFileIsDataError) {
  auto dir = scratch_dir("trunc");
  save_corpus(generate_synthetic_corpus(small_spec()).corpus, dir);
  auto bytes = read_file_bytes(dir / "videos.rlcf");
  bytes.resize(bytes.size() - 5);
  write_file_bytes(dir / "videos.rlcf", bytes);
  try {
    load_corpus(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("videos.rlcf"), std::string::npos);
  }
}

TEST(CorpusFiles, BadMagicAndVersion) {
  FeatureFile f{FeatureRole::kQuery, 2, 3, {Tensor<float>::zeros({2, 3})}};
  auto bytes = serialize_features(f);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_features(bad, "x"), DataError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(parse_features(bad, "x"), DataError);
  auto parsed = parse_features(bytes, "x");
  EXPECT_EQ(parsed.items.size(), 1u);
  EXPECT_EQ(parsed.role, FeatureRole::kQuery);
}

TEST(CorpusFiles, EmptyAnnotationsLoadAsEmptySet) {
  auto dir = scratch_dir("empty");
  auto data = generate_synthetic_corpus(small_spec()).corpus;
  Corpus no_queries(data.videos(), {}, data.splits());
  save_corpus(no_queries, dir);
  auto loaded = load_corpus(dir);
  EXPECT_TRUE(loaded.queries().empty());
  EXPECT_EQ(loaded.videos().size(), 16u);
}

// ---- batching ----

Corpus batching_corpus() { return generate_synthetic_corpus(small_spec()).corpus; }

TEST(MakeBatches, PairOfAnchorsHasOneNegativeEach) {
  auto corpus = batching_corpus();
  // Two queries on different videos.
  std::vector<std::size_t> picks{0};
  for (std::size_t q = 1; q < corpus.queries().size(); ++q)
    if (corpus.queries()[q].video_id != corpus.queries()[0].video_id) {
      picks.push_back(q);
      break;
    }
  auto batches = make_batches(corpus, picks, 2, 10, 1, 0);
  ASSERT_EQ(batches.size(), 1u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(batches[0].query_negatives[i].size(), 1u);
    EXPECT_EQ(batches[0].video_negatives[i].size(), 1u);
  }
}

TEST(MakeBatches, NegativesExcludeOwnPairAndRespectSize) {
  auto corpus = batching_corpus();
  auto train = corpus.split_queries("train");
  auto batches = make_batches(corpus, train, 8, 3, 5, 2);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    seen.insert(b.anchors.begin(), b.anchors.end());
    for (std::size_t i = 0; i < b.anchors.size(); ++i) {
      std::size_t eligible_q = 0;
      for (std::size_t j = 0; j < b.anchors.size(); ++j) eligible_q += b.anchor_video[j] != b.anchor_video[i];
      EXPECT_EQ(b.query_negatives[i].size(), std::min<std::size_t>(3, eligible_q));
      EXPECT_EQ(b.video_negatives[i].size(), std::min<std::size_t>(3, b.videos.size() - 1));
      for (auto j : b.query_negatives[i]) EXPECT_NE(b.anchor_video[j], b.anchor_video[i]);
      for (auto k : b.video_negatives[i]) EXPECT_NE(k, b.anchor_video[i]);
      std::set<std::size_t> unique(b.video_negatives[i].begin(), b.video_negatives[i].end());
      EXPECT_EQ(unique.size(), b.video_negatives[i].size());
    }
  }
  EXPECT_EQ(seen, std::multiset<std::size_t>(train.begin(), train.end()));
}

TEST(MakeBatches, DeterministicUnderSeedAndVariesByEpoch) {
  auto corpus = batching_corpus();
  auto train = corpus.split_queries("train");
  auto a = make_batches(corpus, train, 4, 10, 9, 1);
  auto b = make_batches(corpus, train, 4, 10, 9, 1);
  auto c = make_batches(corpus, train, 4, 10, 9, 2);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].anchors, b[i].anchors);
    EXPECT_EQ(a[i].query_negatives, b[i].query_negatives);
    EXPECT_EQ(a[i].video_negatives, b[i].video_negatives);
    if (i < c.size() && a[i].anchors != c[i].anchors) differs = true;
  }
  EXPECT_TRUE(differs);
}

TEST(MakeBatches, BatchSizeBelowTwoIsConfigError) {
  auto corpus = batching_corpus();
  auto train = corpus.split_queries("train");
  EXPECT_THROW(make_batches(corpus, train, 1, 10, 1, 0), ConfigError);
}

TEST(MakeBatches, TrainingInputsAlignWithBatch) {
  auto corpus = batching_corpus();
  auto train = corpus.split_queries("train");
  auto batch = make_batches(corpus, train, 6, 10, 3, 0).front();
  auto in = to_training_inputs<double>(corpus, batch);
  ASSERT_EQ(in.query_feats.size(), batch.anchors.size());
  ASSERT_EQ(in.video_feats.size(), batch.videos.size());
  for (std::size_t i = 0; i < batch.anchors.size(); ++i) {
    const auto& q = corpus.queries()[batch.anchors[i]];
    EXPECT_EQ(corpus.videos()[batch.videos[in.anchor_video[i]]].id, q.video_id);
    EXPECT_EQ(in.spans[i], q.span);
    EXPECT_EQ(in.query_feats[i].at(0, 0), static_cast<double>(q.word_feats.at(0, 0)));
  }
}

}  // namespace
}  // namespace relocl
