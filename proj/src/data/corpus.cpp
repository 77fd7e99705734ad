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
#include <fstream>
#include <sstream>

#include "relocl/byte_io.hpp"
#include "relocl/corpus.hpp"

namespace relocl {

namespace {

constexpr std::uint32_t kFeatureVersion = 1;

void check_time(double tau, double duration, const char* what) {
  if (!(duration > 0.0)) throw DataError(std::string(what) + ": duration must be positive");
  if (!(tau >= 0.0 && tau <= duration)) {
    std::ostringstream msg;
    msg << what << ": time " << tau << " outside [0, " << duration << "]";
    throw DataError(msg.str());
  }
}

std::size_t clamp_index(double position, std::size_t n_v) {
  if (position <= 0.0) return 0;
  auto index = static_cast<std::size_t>(std::floor(position));
  return std::min(index, n_v - 1);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

Mask prefix(std::size_t size, std::size_t valid) {
  Mask m(size, 0);
  std::fill_n(m.begin(), valid, 1);
  return m;
}

FeatureFile load_feature_file(const std::filesystem::path& path, FeatureRole role) {
  auto bytes = read_file_bytes(path);
  auto file = parse_features(bytes, path.string());
  if (file.role != role) throw DataError(path.string() + ": unexpected feature role");
  return file;
}

}  // namespace

std::size_t time_to_index(double tau, double duration, std::size_t n_v) {
  if (n_v == 0) throw DataError("time_to_index: video has no clip units");
  check_time(tau, duration, "time_to_index");
  return clamp_index(tau / duration * static_cast<double>(n_v), n_v);
}

MomentSpan times_to_span(double tau_s, double tau_e, double duration, std::size_t n_v) {
  if (!(tau_e > tau_s)) throw DataError("times_to_span: end time must exceed start time");
  const std::size_t start = time_to_index(tau_s, duration, n_v);
  check_time(tau_e, duration, "times_to_span");
  const double eps = 1e-9 * duration;
  const std::size_t end = clamp_index((tau_e - eps) / duration * static_cast<double>(n_v), n_v);
  return {start, std::max(start, end)};
}

void to_json(nlohmann::json& j, const Splits& s) { j = nlohmann::json{{"train", s.train}, {"val", s.val}}; }

void from_json(const nlohmann::json& j, Splits& s) {
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
}

Corpus::Corpus(std::vector<VideoRecord> videos, std::vector<QueryAnnotation> queries, Splits splits)
    : videos_(std::move(videos)), queries_(std::move(queries)), splits_(std::move(splits)) {
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    if (!video_lookup_.emplace(videos_[i].id, i).second) throw DataError("duplicate video id " + videos_[i].id);
    if ((videos_[i].sub_feats.has_value()) != videos_.front().sub_feats.has_value()) {
      throw DataError("video " + videos_[i].id + ": subtitle stream present for some videos only");
    }
  }
  for (const auto& q : queries_) {
    const auto& v = videos_[video_index(q.video_id)];
    if (q.span.start > q.span.end || q.span.end >= v.length()) {
      throw DataError("query " + q.query_id + ": gold span outside video " + v.id);
    }
  }
  for (const auto* list : {&splits_.train, &splits_.val})
    for (const auto& id : *list) video_index(id);
}

std::size_t Corpus::video_index(const std::string& id) const {
  auto it = video_lookup_.find(id);
  if (it == video_lookup_.end()) throw DataError("unknown video id " + id);
  return it->second;
}

std::vector<std::size_t> Corpus::split_videos(const std::string& split) const {
  const std::vector<std::string>* ids = nullptr;
  if (split == "train") ids = &splits_.train;
  else if (split == "val") ids = &splits_.val;
  else throw ConfigError("unknown split '" + split + "' (expected train or val)");
  std::vector<std::size_t> out;
  out.reserve(ids->size());
  for (const auto& id : *ids) out.push_back(video_index(id));
  return out;
}

std::vector<std::size_t> Corpus::split_queries(const std::string& split) const {
  auto vids = split_videos(split);
  std::vector<bool> member(videos_.size(), false);
  for (auto v : vids) member[v] = true;
  std::vector<std::size_t> out;
  for (std::size_t q = 0; q < queries_.size(); ++q)
    if (member[video_index(queries_[q].video_id)]) out.push_back(q);
  return out;
}

std::vector<std::uint8_t> serialize_features(const FeatureFile& file) {
  ByteWriter w;
  w.magic("RLCF");
  w.u32(kFeatureVersion);
  w.u8(static_cast<std::uint8_t>(file.role));
  w.u32(file.rows);
  w.u32(file.cols);
  w.u32(static_cast<std::uint32_t>(file.items.size()));
  const Shape expected{file.rows, file.cols};
  for (const auto& item : file.items) {
    if (item.shape() != expected) {
      throw DimensionError("serialize_features: item shape " + shape_str(item.shape()) + " differs from " +
                           shape_str(expected));
    }
    w.f32s(item.data());
  }
  return w.take();
}

FeatureFile parse_features(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic("RLCF");
  if (auto version = r.u32(); version != kFeatureVersion) {
    throw DataError(what + ": unsupported feature file version " + std::to_string(version));
  }
  FeatureFile file;
  const auto role = r.u8();
  if (role > 2) throw DataError(what + ": unknown feature role " + std::to_string(role));
  file.role = static_cast<FeatureRole>(role);
  file.rows = r.u32();
  file.cols = r.u32();
  const auto count = r.u32();
  const std::size_t per_item = static_cast<std::size_t>(file.rows) * file.cols;
  if (count > 0 && per_item * sizeof(float) * count > r.remaining()) throw DataError(what + ": truncated");
  file.items.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<float> values(per_item);
    r.f32s(values);
    file.items.push_back(Tensor<float>::from({file.rows, file.cols}, std::move(values)));
  }
  if (!r.at_end()) throw DataError(what + ": trailing bytes after " + std::to_string(count) + " records");
  return file;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& videos = corpus.videos();
  const auto& queries = corpus.queries();

  auto feature_block = [](FeatureRole role, auto&& get, std::size_t count, std::size_t rows, std::size_t cols) {
    FeatureFile file{role, static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols), {}};
    for (std::size_t i = 0; i < count; ++i) file.items.push_back(get(i));
    return serialize_features(file);
  };

  std::size_t v_rows = 0, v_cols = 0, s_cols = 0;
  if (!videos.empty()) {
    v_rows = videos.front().vis_feats.dim(0);
    v_cols = videos.front().vis_feats.dim(1);
    if (videos.front().sub_feats) s_cols = videos.front().sub_feats->dim(1);
  }
  write_file_bytes(dir / "videos.rlcf", feature_block(
                                            FeatureRole::kVideo, [&](std::size_t i) { return videos[i].vis_feats; },
                                            videos.size(), v_rows, v_cols));
  std::filesystem::remove(dir / "subtitles.rlcf");
  if (corpus.has_subtitles()) {
    write_file_bytes(dir / "subtitles.rlcf",
                     feature_block(
                         FeatureRole::kSubtitle, [&](std::size_t i) { return *videos[i].sub_feats; }, videos.size(),
                         v_rows, s_cols));
  }
  std::size_t q_rows = 0, q_cols = 0;
  if (!queries.empty()) {
    q_rows = queries.front().word_feats.dim(0);
    q_cols = queries.front().word_feats.dim(1);
  }
  write_file_bytes(dir / "queries.rlcf", feature_block(
                                             FeatureRole::kQuery, [&](std::size_t i) { return queries[i].word_feats; },
                                             queries.size(), q_rows, q_cols));

  std::string video_lines;
  for (const auto& v : videos) {
    video_lines += nlohmann::json{{"video_id", v.id}, {"duration", v.duration}, {"n_v", v.length()}}.dump() + "\n";
  }
  write_text(dir / "videos.jsonl", video_lines);
  std::string annotation_lines;
  for (const auto& q : queries) {
    annotation_lines += nlohmann::json{{"query_id", q.query_id}, {"video_id", q.video_id}, {"tau_s", q.tau_s},
                                       {"tau_e", q.tau_e},       {"i_s", q.span.start},   {"i_e", q.span.end},
                                       {"n_q", q.length()}}
                            .dump() +
                        "\n";
  }
  write_text(dir / "annotations.jsonl", annotation_lines);
  write_text(dir / "splits.json", nlohmann::json(corpus.splits()).dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  auto vis = load_feature_file(dir / "videos.rlcf", FeatureRole::kVideo);
  std::optional<FeatureFile> subs;
  if (std::filesystem::exists(dir / "subtitles.rlcf")) {
    subs = load_feature_file(dir / "subtitles.rlcf", FeatureRole::kSubtitle);
    if (subs->items.size() != vis.items.size() || subs->rows != vis.rows) {
      throw DataError((dir / "subtitles.rlcf").string() + ": does not align with videos.rlcf");
    }
  }
  auto words = load_feature_file(dir / "queries.rlcf", FeatureRole::kQuery);

  const auto video_meta = read_lines(dir / "videos.jsonl");
  if (video_meta.size() != vis.items.size()) {
    throw DataError((dir / "videos.jsonl").string() + ": " + std::to_string(video_meta.size()) +
                    " records but videos.rlcf holds " + std::to_string(vis.items.size()));
  }
  std::vector<VideoRecord> videos;
  for (std::size_t i = 0; i < video_meta.size(); ++i) {
    const auto what = (dir / "videos.jsonl").string() + " line " + std::to_string(i + 1);
    auto j = parse_json(video_meta[i], what);
    VideoRecord v;
    try {
      v.id = j.at("video_id").get<std::string>();
      v.duration = j.at("duration").get<double>();
      const auto n_v = j.at("n_v").get<std::size_t>();
      if (n_v == 0 || n_v > vis.rows) throw DataError(what + ": n_v out of range");
      v.mask = prefix(vis.rows, n_v);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(what + ": " + e.what());
    }
    v.vis_feats = vis.items[i];
    if (subs) v.sub_feats = subs->items[i];
    videos.push_back(std::move(v));
  }

  const auto annotation_lines = read_lines(dir / "annotations.jsonl");
  if (annotation_lines.size() != words.items.size()) {
    throw DataError((dir / "annotations.jsonl").string() + ": " + std::to_string(annotation_lines.size()) +
                    " records but queries.rlcf holds " + std::to_string(words.items.size()));
  }
  std::vector<QueryAnnotation> queries;
  for (std::size_t i = 0; i < annotation_lines.size(); ++i) {
    const auto what = (dir / "annotations.jsonl").string() + " line " + std::to_string(i + 1);
    auto j = parse_json(annotation_lines[i], what);
    QueryAnnotation q;
    try {
      q.query_id = j.at("query_id").get<std::string>();
      q.video_id = j.at("video_id").get<std::string>();
      q.tau_s = j.at("tau_s").get<double>();
      q.tau_e = j.at("tau_e").get<double>();
      q.span = {j.at("i_s").get<std::size_t>(), j.at("i_e").get<std::size_t>()};
      const auto n_q = j.at("n_q").get<std::size_t>();
      if (n_q == 0 || n_q > words.rows) throw DataError(what + ": n_q out of range");
      q.word_mask = prefix(words.rows, n_q);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(what + ": " + e.what());
    }
    q.word_feats = words.items[i];
    queries.push_back(std::move(q));
  }

  std::ifstream split_in(dir / "splits.json");
  if (!split_in) throw DataError((dir / "splits.json").string() + ": cannot open");
  std::stringstream split_text;
  split_text << split_in.rdbuf();
  Splits splits;
  try {
    splits = parse_json(split_text.str(), (dir / "splits.json").string()).get<Splits>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "splits.json").string() + ": " + e.what());
  }
  return Corpus(std::move(videos), std::move(queries), std::move(splits));
}

}  // namespace relocl
