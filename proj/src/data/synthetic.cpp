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
#include <cmath>
#include <cstdio>
#include <random>

#include "relocl/corpus.hpp"

namespace relocl {

namespace {

using Vec = std::vector<double>;

double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Vec normalized(Vec v) {
  const double n = norm(v);
  for (auto& x : v) x /= n;
  return v;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Maps a latent direction through a fixed [out × latent] matrix and
// renormalizes.
Vec embed(const std::vector<Vec>& map, const Vec& latent) {
  Vec out(map.size());
  for (std::size_t r = 0; r < map.size(); ++r) out[r] = dot(map[r], latent);
  return normalized(std::move(out));
}

std::size_t uniform_size(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string make_id(char prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, n);
  return buf;
}

std::pair<std::size_t, std::size_t> span_length_range(const SyntheticSpec& s, std::size_t n_v) {
  const auto lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(s.span_min_frac * n_v)));
  const auto hi = std::max(lo, static_cast<std::size_t>(std::floor(s.span_max_frac * n_v)));
  return {lo, hi};
}

// Fills rows [0, n) with isotropic noise of expected norm `noise`.
std::vector<float> noise_rows(std::size_t rows, std::size_t n, std::size_t cols, double noise,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, noise / std::sqrt(static_cast<double>(cols)));
  std::vector<float> out(rows * cols, 0.0f);
  for (std::size_t i = 0; i < n * cols; ++i) out[i] = static_cast<float>(dist(rng));
  return out;
}

void add_signal(std::vector<float>& rows, std::size_t cols, MomentSpan span, const Vec& direction, double amount) {
  for (std::size_t r = span.start; r <= span.end; ++r)
    for (std::size_t c = 0; c < cols; ++c) rows[r * cols + c] += static_cast<float>(amount * direction[c]);
}

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("synthetic spec: " + msg); };
  if (train_videos == 0) fail("train_videos must be positive");
  if (n_v_min == 0 || n_v_min > n_v_max) fail("need 1 <= n_v_min <= n_v_max");
  if (n_q_min == 0 || n_q_min > n_q_max || n_q_max > n_q_pad) fail("need 1 <= n_q_min <= n_q_max <= n_q_pad");
  if (d_v == 0 || d_w == 0 || latent == 0) fail("dimensions must be positive");
  if (moments_min == 0 || moments_min > moments_max) fail("need 1 <= moments_min <= moments_max");
  if (!(span_min_frac > 0.0) || span_min_frac > span_max_frac) fail("need 0 < span_min_frac <= span_max_frac");
  if (span_max_frac > 1.0) fail("span_max_frac > 1 asks for spans longer than the video");
  if (!(signal > 0.0)) fail("signal strength must be positive");
  if (!(noise >= 0.0)) fail("noise scale must be non-negative");
  if (!(clip_seconds > 0.0)) fail("clip_seconds must be positive");
  if (static_cast<std::size_t>(std::ceil(span_min_frac * n_v_min)) > n_v_min) fail("span longer than video");
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"train_videos", s.train_videos},
                     {"val_videos", s.val_videos},
                     {"n_v_min", s.n_v_min},
                     {"n_v_max", s.n_v_max},
                     {"n_q_min", s.n_q_min},
                     {"n_q_max", s.n_q_max},
                     {"n_q_pad", s.n_q_pad},
                     {"d_v", s.d_v},
                     {"d_w", s.d_w},
                     {"latent", s.latent},
                     {"moments_min", s.moments_min},
                     {"moments_max", s.moments_max},
                     {"span_min_frac", s.span_min_frac},
                     {"span_max_frac", s.span_max_frac},
                     {"signal", s.signal},
                     {"noise", s.noise},
                     {"clip_seconds", s.clip_seconds},
                     {"max_direction_cosine", s.max_direction_cosine},
                     {"subtitles", s.subtitles},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  SyntheticSpec d;
  s.train_videos = j.value("train_videos", d.train_videos);
  s.val_videos = j.value("val_videos", d.val_videos);
  s.n_v_min = j.value("n_v_min", d.n_v_min);
  s.n_v_max = j.value("n_v_max", d.n_v_max);
  s.n_q_min = j.value("n_q_min", d.n_q_min);
  s.n_q_max = j.value("n_q_max", d.n_q_max);
  s.n_q_pad = j.value("n_q_pad", d.n_q_pad);
  s.d_v = j.value("d_v", d.d_v);
  s.d_w = j.value("d_w", d.d_w);
  s.latent = j.value("latent", d.latent);
  s.moments_min = j.value("moments_min", d.moments_min);
  s.moments_max = j.value("moments_max", d.moments_max);
  s.span_min_frac = j.value("span_min_frac", d.span_min_frac);
  s.span_max_frac = j.value("span_max_frac", d.span_max_frac);
  s.signal = j.value("signal", d.signal);
  s.noise = j.value("noise", d.noise);
  s.clip_seconds = j.value("clip_seconds", d.clip_seconds);
  s.max_direction_cosine = j.value("max_direction_cosine", d.max_direction_cosine);
  s.subtitles = j.value("subtitles", d.subtitles);
  s.seed = j.value("seed", d.seed);
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  std::vector<Vec> visual_map(spec.d_v), word_map(spec.d_w);
  for (auto& row : visual_map) row = gaussian(spec.latent, rng);
  for (auto& row : word_map) row = gaussian(spec.latent, rng);

  struct Planted {
    Vec visual, word;
  };
  std::vector<Planted> planted_dirs;
  // Rejection is done on the embedded directions, which is where retrieval
  // happens; the latent code only ties the two views together.
  auto draw_direction = [&] {
    constexpr int kAttempts = 64;
    Planted best;
    double best_cos = 2.0;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      const Vec u = normalized(gaussian(spec.latent, rng));
      Planted cand{embed(visual_map, u), embed(word_map, u)};
      double worst = -1.0;
      for (const auto& prev : planted_dirs) {
        worst = std::max({worst, dot(cand.visual, prev.visual), dot(cand.word, prev.word)});
      }
      if (worst < best_cos) {
        best_cos = worst;
        best = std::move(cand);
      }
      if (best_cos <= spec.max_direction_cosine) break;
    }
    planted_dirs.push_back(best);
    return best;
  };

  const std::size_t total_videos = spec.train_videos + spec.val_videos;
  std::vector<VideoRecord> videos;
  std::vector<QueryAnnotation> queries;
  std::vector<std::vector<float>> planted;
  Splits splits;

  for (std::size_t v = 0; v < total_videos; ++v) {
    VideoRecord video;
    video.id = make_id('v', v, 5);
    const std::size_t n_v = uniform_size(spec.n_v_min, spec.n_v_max, rng);
    video.duration = static_cast<double>(n_v) * spec.clip_seconds;
    video.mask.assign(spec.n_v_max, 0);
    std::fill_n(video.mask.begin(), n_v, 1);

    auto vis = noise_rows(spec.n_v_max, n_v, spec.d_v, spec.noise, rng);
    std::vector<float> sub;
    if (spec.subtitles) sub = noise_rows(spec.n_v_max, n_v, spec.d_w, spec.noise, rng);

    const std::size_t moments = uniform_size(spec.moments_min, spec.moments_max, rng);
    const auto [len_lo, len_hi] = span_length_range(spec, n_v);
    std::vector<std::size_t> lengths;
    std::size_t used = 0;
    for (std::size_t m = 0; m < moments; ++m) {
      const std::size_t len = uniform_size(len_lo, std::min(len_hi, n_v), rng);
      // Moments are kept disjoint; ones that no longer fit are dropped.
      if (used + len > n_v && !lengths.empty()) continue;
      lengths.push_back(len);
      used += len;
    }
    // Scatter the free units into gaps before, between and after the moments.
    std::vector<std::size_t> gaps(lengths.size() + 1, 0);
    for (std::size_t f = 0; f < n_v - used; ++f) ++gaps[uniform_size(0, lengths.size(), rng)];
    std::vector<MomentSpan> spans;
    std::size_t cursor = 0;
    for (std::size_t m = 0; m < lengths.size(); ++m) {
      cursor += gaps[m];
      spans.push_back({cursor, cursor + lengths[m] - 1});
      cursor += lengths[m];
    }

    for (const auto& span : spans) {
      const Planted dir = draw_direction();
      const Vec& p_v = dir.visual;
      const Vec& p_w = dir.word;
      add_signal(vis, spec.d_v, span, p_v, spec.signal);
      if (spec.subtitles) add_signal(sub, spec.d_w, span, p_w, spec.signal);

      QueryAnnotation q;
      q.query_id = make_id('q', queries.size(), 6);
      q.video_id = video.id;
      const std::size_t n_q = uniform_size(spec.n_q_min, spec.n_q_max, rng);
      auto words = noise_rows(spec.n_q_pad, n_q, spec.d_w, spec.noise, rng);
      add_signal(words, spec.d_w, {0, n_q - 1}, p_w, spec.signal);
      q.word_feats = Tensor<float>::from({spec.n_q_pad, spec.d_w}, std::move(words));
      q.word_mask.assign(spec.n_q_pad, 0);
      std::fill_n(q.word_mask.begin(), n_q, 1);
      q.tau_s = (static_cast<double>(span.start) + 0.25) * spec.clip_seconds;
      q.tau_e = (static_cast<double>(span.end) + 0.75) * spec.clip_seconds;
      q.span = times_to_span(q.tau_s, q.tau_e, video.duration, n_v);
      queries.push_back(std::move(q));
      planted.emplace_back(p_v.begin(), p_v.end());
    }

    video.vis_feats = Tensor<float>::from({spec.n_v_max, spec.d_v}, std::move(vis));
    if (spec.subtitles) video.sub_feats = Tensor<float>::from({spec.n_v_max, spec.d_w}, std::move(sub));
    (v < spec.train_videos ? splits.train : splits.val).push_back(video.id);
    videos.push_back(std::move(video));
  }

  return {Corpus(std::move(videos), std::move(queries), std::move(splits)), std::move(planted)};
}

double planted_oracle_recall_at_1(const SyntheticCorpus& data, const std::string& split) {
  const auto& corpus = data.corpus;
  const auto video_ids = corpus.split_videos(split);
  const auto query_ids = corpus.split_queries(split);
  if (query_ids.empty()) return 0.0;
  std::size_t hits = 0;
  for (auto qi : query_ids) {
    const auto& dir = data.planted_visual[qi];
    double best = -2.0;
    std::string best_id;
    for (auto vi : video_ids) {
      const auto& video = corpus.videos()[vi];
      const std::size_t cols = video.vis_feats.dim(1);
      const float* rows = video.vis_feats.data().data();
      for (std::size_t r = 0; r < video.length(); ++r) {
        double d = 0.0, n = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          d += rows[r * cols + c] * dir[c];
          n += rows[r * cols + c] * rows[r * cols + c];
        }
        const double cosine = d / std::max(std::sqrt(n), 1e-12);
        if (cosine > best || (cosine == best && video.id < best_id)) {
          best = cosine;
          best_id = video.id;
        }
      }
    }
    if (best_id == corpus.queries()[qi].video_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(query_ids.size());
}

}  // namespace relocl
