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

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "relocl/retrieval.hpp"
#include "relocl/span.hpp"

namespace relocl {

// IoU of the half-open unit intervals [start, end + 1).
double temporal_iou(MomentSpan a, MomentSpan b);

// Fraction of queries whose gold video is among the first k ranked ids.
double recall_vr(const std::vector<std::vector<std::string>>& rankings, const std::vector<std::string>& gold,
                 std::size_t k);

enum class MomentTask { kSvmr, kVcmr };

struct GoldMoment {
  std::string video_id;
  MomentSpan span;
};

// A query is a hit when one of its first k predictions has IoU > mu with the
// gold span (strictly) and, for VCMR, names the gold video. SVMR predictions
// are assumed to come from the gold video.
double recall_moment(const std::vector<std::vector<MomentPrediction>>& predictions,
                     const std::vector<GoldMoment>& gold, std::size_t k, double mu, MomentTask task);

struct EvalOptions {
  RetrievalParams retrieval;
  std::vector<std::size_t> vr_ks{1, 5, 10, 100};
  std::vector<std::size_t> moment_ks{1, 10, 100};
  std::vector<double> ious{0.5, 0.7};
  // Extra thresholds for recall-vs-IoU curves.
  std::vector<double> mu_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

struct RecallKey {
  std::size_t k = 0;
  double mu = 0.0;
  auto operator<=>(const RecallKey&) const = default;
};

struct EvalReport {
  std::size_t queries = 0;
  std::size_t videos = 0;
  std::map<std::size_t, double> vr;
  std::map<RecallKey, double> svmr;  // over ious and mu_grid
  std::map<RecallKey, double> vcmr;

  double vcmr_at(std::size_t k, double mu) const;
  double svmr_at(std::size_t k, double mu) const;
  // Throws NumericError naming the first violated invariant: recalls in
  // [0, 1], non-decreasing in k, non-increasing in mu.
  void check_invariants() const;
};

void to_json(nlohmann::json& j, const EvalReport& r);
// Rows "task,k,mu,recall" for every stored (k, mu) pair.
std::string recall_curves_csv(const EvalReport& r);

// Raw per-query outputs the report is computed from.
struct EvalOutputs {
  std::vector<std::string> query_ids;
  std::vector<std::vector<std::string>> vr_rankings;
  std::vector<std::vector<MomentPrediction>> svmr;
  std::vector<std::vector<MomentPrediction>> vcmr;
  std::vector<GoldMoment> gold;
};

EvalReport report_from_outputs(const EvalOutputs& outputs, std::size_t videos, const EvalOptions& options);

// Indexes the split's videos and scores every query of the split against them.
EvalOutputs run_evaluation(const ReloclModel<float>& model, const Corpus& corpus, const std::string& split,
                           const EvalOptions& options, const CorpusIndex* prebuilt = nullptr);

EvalReport evaluate(const ReloclModel<float>& model, const Corpus& corpus, const std::string& split,
                    const EvalOptions& options);

}  // namespace relocl
