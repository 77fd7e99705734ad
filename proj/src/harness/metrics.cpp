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

#include "relocl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace relocl {

namespace {

void check_alignment(std::size_t predictions, std::size_t gold, const char* what) {
  if (predictions != gold) {
    throw DataError(std::string(what) + ": " + std::to_string(gold) + " gold entries but " +
                    std::to_string(predictions) + " rankings");
  }
}

double lookup(const std::map<RecallKey, double>& table, std::size_t k, double mu, const char* task) {
  for (const auto& [key, value] : table)
    if (key.k == k && std::abs(key.mu - mu) < 1e-12) return value;
  std::ostringstream msg;
  msg << task << " recall at k=" << k << ", mu=" << mu << " was not computed";
  throw ConfigError(msg.str());
}

std::string mu_label(double mu) {
  std::ostringstream s;
  s << mu;
  return s.str();
}

}  // namespace

double temporal_iou(MomentSpan a, MomentSpan b) {
  const std::size_t inter_lo = std::max(a.start, b.start);
  const std::size_t inter_hi = std::min(a.end, b.end) + 1;
  const std::size_t inter = inter_hi > inter_lo ? inter_hi - inter_lo : 0;
  const std::size_t uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double recall_vr(const std::vector<std::vector<std::string>>& rankings, const std::vector<std::string>& gold,
                 std::size_t k) {
  check_alignment(rankings.size(), gold.size(), "recall_vr");
  if (gold.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < gold.size(); ++q) {
    const auto& r = rankings[q];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()));
    hits += std::find(r.begin(), end, gold[q]) != end;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double recall_moment(const std::vector<std::vector<MomentPrediction>>& predictions,
                     const std::vector<GoldMoment>& gold, std::size_t k, double mu, MomentTask task) {
  check_alignment(predictions.size(), gold.size(), "recall_moment");
  if (gold.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < gold.size(); ++q) {
    const auto& preds = predictions[q];
    const std::size_t n = std::min(k, preds.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (task == MomentTask::kVcmr && preds[i].video_id != gold[q].video_id) continue;
      if (temporal_iou(preds[i].span, gold[q].span) > mu) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double EvalReport::vcmr_at(std::size_t k, double mu) const { return lookup(vcmr, k, mu, "VCMR"); }
double EvalReport::svmr_at(std::size_t k, double mu) const { return lookup(svmr, k, mu, "SVMR"); }

void EvalReport::check_invariants() const {
  auto fail = [](const std::string& msg) { throw NumericError("eval report: " + msg); };
  double prev = -1.0;
  for (const auto& [k, r] : vr) {
    if (r < 0.0 || r > 1.0) fail("VR recall outside [0, 1]");
    if (r < prev) fail("VR recall decreases with k at k=" + std::to_string(k));
    prev = r;
  }
  for (const auto* table : {&svmr, &vcmr}) {
    for (const auto& [key, r] : *table) {
      if (r < 0.0 || r > 1.0) fail("moment recall outside [0, 1]");
      for (const auto& [other, r2] : *table) {
        if (other.mu == key.mu && other.k > key.k && r2 < r) fail("moment recall decreases with k");
        if (other.k == key.k && other.mu > key.mu && r2 > r) fail("moment recall increases with IoU threshold");
      }
    }
  }
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json::object();
  j["queries"] = r.queries;
  j["videos"] = r.videos;
  auto& vr = j["vr"] = nlohmann::json::object();
  for (const auto& [k, v] : r.vr) vr["R@" + std::to_string(k)] = v;
  for (const auto& [name, table] : {std::pair{"svmr", &r.svmr}, std::pair{"vcmr", &r.vcmr}}) {
    auto& out = j[name] = nlohmann::json::object();
    for (const auto& [key, v] : *table) out["R@" + std::to_string(key.k) + ",IoU=" + mu_label(key.mu)] = v;
  }
}

std::string recall_curves_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "task,k,mu,recall\n";
  for (const auto& [name, table] : {std::pair{"svmr", &r.svmr}, std::pair{"vcmr", &r.vcmr}}) {
    for (const auto& [key, v] : *table) out << name << ',' << key.k << ',' << mu_label(key.mu) << ',' << v << '\n';
  }
  return out.str();
}

EvalReport report_from_outputs(const EvalOutputs& o, std::size_t videos, const EvalOptions& options) {
  EvalReport report;
  report.queries = o.gold.size();
  report.videos = videos;
  std::vector<std::string> gold_ids;
  for (const auto& g : o.gold) gold_ids.push_back(g.video_id);
  for (auto k : options.vr_ks) report.vr[k] = recall_vr(o.vr_rankings, gold_ids, k);
  std::vector<double> mus = options.ious;
  mus.insert(mus.end(), options.mu_grid.begin(), options.mu_grid.end());
  std::sort(mus.begin(), mus.end());
  mus.erase(std::unique(mus.begin(), mus.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
            mus.end());
  for (auto k : options.moment_ks) {
    for (double mu : mus) {
      report.svmr[{k, mu}] = recall_moment(o.svmr, o.gold, k, mu, MomentTask::kSvmr);
      report.vcmr[{k, mu}] = recall_moment(o.vcmr, o.gold, k, mu, MomentTask::kVcmr);
    }
  }
  return report;
}

EvalOutputs run_evaluation(const ReloclModel<float>& model, const Corpus& corpus, const std::string& split,
                           const EvalOptions& options, const CorpusIndex* prebuilt) {
  std::vector<VideoRecord> videos;
  for (auto v : corpus.split_videos(split)) videos.push_back(corpus.videos()[v]);
  CorpusIndex local;
  if (!prebuilt) local = build_corpus_index(model, Digest{}, videos);
  const CorpusIndex& index = prebuilt ? *prebuilt : local;

  std::size_t max_vr_k = 1, max_moment_k = 1;
  for (auto k : options.vr_ks) max_vr_k = std::max(max_vr_k, k);
  for (auto k : options.moment_ks) max_moment_k = std::max(max_moment_k, k);

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < index.entries.size(); ++i) position[index.entries[i].id] = i;

  EvalOutputs out;
  for (auto qi : corpus.split_queries(split)) {
    const auto& q = corpus.queries()[qi];
    const auto query = encode_query_vectors(model, q);
    out.query_ids.push_back(q.query_id);
    out.gold.push_back({q.video_id, q.span});

    std::vector<std::string> ranked;
    for (const auto& hit : retrieve_videos(query, index.entries, max_vr_k, options.retrieval.threads)) {
      ranked.push_back(hit.id);
    }
    out.vr_rankings.push_back(std::move(ranked));

    auto it = position.find(q.video_id);
    if (it == position.end()) throw DataError("query " + q.query_id + ": gold video missing from the index");
    std::vector<MomentPrediction> single;
    for (const auto& c : localize_moments(query, index.entries[it->second], model.boundary, max_moment_k,
                                          options.retrieval.l_max)) {
      single.push_back({q.video_id, c.span, c.p_se, 0.0, c.p_se});
    }
    out.svmr.push_back(std::move(single));
    out.vcmr.push_back(vcmr_rank(query, index.entries, model.boundary, options.retrieval));
  }
  return out;
}

EvalReport evaluate(const ReloclModel<float>& model, const Corpus& corpus, const std::string& split,
                    const EvalOptions& options) {
  auto outputs = run_evaluation(model, corpus, split, options);
  auto report = report_from_outputs(outputs, corpus.split_videos(split).size(), options);
  report.check_invariants();
  return report;
}

}  // namespace relocl
