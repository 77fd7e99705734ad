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
#include <functional>
#include <optional>
#include <ostream>

#include "json.hpp"
#include "relocl/checkpoint.hpp"
#include "relocl/corpus.hpp"
#include "relocl/grad_check.hpp"
#include "relocl/metrics.hpp"
#include "relocl/objectives.hpp"
#include "relocl/optim.hpp"

namespace relocl {

struct RunConfig {
  ModelConfig model;
  ObjectiveGates gates;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  // Epochs without a validation improvement before stopping; 0 disables.
  std::size_t patience = 10;
  // Early stopping is not considered before this many epochs.
  std::size_t min_epochs = 0;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double warmup_proportion = 0.01;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  std::uint64_t seed = 1;
  RetrievalParams eval;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Desk-scale run defaults, or the published hyper-parameters.
RunConfig desk_run();
RunConfig paper_run();

struct EpochSummary {
  std::size_t epoch = 0;
  LossReport mean_loss;
  double val_metric = 0.0;  // validation VCMR R@1, IoU=0.5
  double val_vr_r1 = 0.0;
  bool improved = false;
};

struct TrainResult {
  Checkpoint best;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  std::vector<EpochSummary> history;
};

// Single-threaded, seeded training. Writes one JSON object per step and per
// epoch to `log` when given. On a non-finite loss the best checkpoint so far is
// written to `abort_checkpoint` (if given) and NumericError is thrown.
TrainResult train(const RunConfig& config, const Corpus& corpus, std::ostream* log = nullptr,
                  const std::optional<std::filesystem::path>& abort_checkpoint = std::nullopt);

nlohmann::json checkpoint_config(const RunConfig& config);

// Gradient check of the full four-objective loss, in 64-bit arithmetic, on a
// seeded synthetic batch of two videos and four queries with small dimensions.
struct FullLossCheck {
  GradCheckResult result;
  std::size_t videos = 0;
  std::size_t queries = 0;
  std::size_t parameters = 0;
};
FullLossCheck full_loss_gradient_check(std::uint64_t seed, double h = 1e-4);

}  // namespace relocl
