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

#include "relocl/training.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace relocl {

namespace {

void write_line(std::ostream* log, const nlohmann::json& j) {
  if (log) *log << j.dump() << '\n';
}

nlohmann::json loss_fields(const LossReport& r) {
  nlohmann::json j = r;
  return j;
}

void clip_gradients(ParameterSet<float>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.items())
    if (p.tensor.has_grad())
      for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const auto factor = static_cast<float>(max_norm / norm);
  for (auto& p : params.items())
    if (p.tensor.has_grad())
      for (float& g : p.tensor.mutable_grad()) g *= factor;
}

EvalOptions early_stop_eval(const RunConfig& config) {
  EvalOptions o;
  o.retrieval = config.eval;
  o.vr_ks = {1};
  o.moment_ks = {1};
  o.ious = {0.5};
  o.mu_grid = {};
  return o;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (!gates.vr && !gates.ml) throw ConfigError("run config: at least one of the VR and ML objectives must be on");
  if (epochs == 0) throw ConfigError("run config: epochs must be positive");
  if (batch_size < 2) throw ConfigError("run config: batch size must be at least 2");
  if (!(lr > 0.0)) throw ConfigError("run config: learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("run config: weight decay must be non-negative");
  if (!(warmup_proportion >= 0.0 && warmup_proportion <= 1.0)) throw ConfigError("run config: bad warmup proportion");
  if (!(grad_clip >= 0.0)) throw ConfigError("run config: grad_clip must be non-negative");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"gates", c.gates},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"patience", c.patience},
                     {"min_epochs", c.min_epochs},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"warmup_proportion", c.warmup_proportion},
                     {"grad_clip", c.grad_clip},
                     {"seed", c.seed},
                     {"eval",
                      {{"k", c.eval.k}, {"top_n", c.eval.top_n}, {"l_max", c.eval.l_max}, {"gamma", c.eval.gamma}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  RunConfig d = desk_run();
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.gates = j.contains("gates") ? j.at("gates").get<ObjectiveGates>() : d.gates;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.patience = j.value("patience", d.patience);
  c.min_epochs = j.value("min_epochs", d.min_epochs);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.warmup_proportion = j.value("warmup_proportion", d.warmup_proportion);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.seed = j.value("seed", d.seed);
  c.eval = d.eval;
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.k = e.value("k", d.eval.k);
    c.eval.top_n = e.value("top_n", d.eval.top_n);
    c.eval.l_max = e.value("l_max", d.eval.l_max);
    c.eval.gamma = e.value("gamma", d.eval.gamma);
  }
}

RunConfig desk_run() {
  RunConfig c;
  c.model = desk_profile();
  c.lr = 3e-4;
  c.grad_clip = 1.0;
  c.min_epochs = 50;
  c.eval.gamma = c.model.gamma;
  c.eval.k = c.model.top_k;
  c.eval.top_n = c.model.top_n;
  c.eval.l_max = c.model.l_max;
  return c;
}

RunConfig paper_run() {
  RunConfig c;
  c.model = paper_profile();
  c.epochs = 100;
  c.batch_size = 128;
  c.lr = 1e-4;
  c.eval.gamma = c.model.gamma;
  return c;
}

nlohmann::json checkpoint_config(const RunConfig& config) {
  nlohmann::json run = config;
  nlohmann::json out;
  out["model"] = run.at("model");
  out["model"]["seed"] = config.seed;
  out["run"] = run;
  return out;
}

TrainResult train(const RunConfig& config, const Corpus& corpus, std::ostream* log,
                  const std::optional<std::filesystem::path>& abort_checkpoint) {
  config.validate();
  ModelConfig model_cfg = config.model;
  model_cfg.seed = config.seed;
  ReloclModel<float> model(model_cfg);
  if (corpus.has_subtitles() != model_cfg.subtitle_enabled) {
    // Subtitle features may exist on disk but be ignored by a video-only model.
    if (model_cfg.subtitle_enabled) throw ConfigError("train: model expects subtitles but the corpus has none");
  }

  const auto train_queries = corpus.split_queries("train");
  if (train_queries.size() < 2) throw ConfigError("train: need at least two training queries");
  const bool has_val = !corpus.split_queries("val").empty();

  // Video-only models train on a corpus view without the subtitle stream.
  const Corpus* data = &corpus;
  Corpus video_only;
  if (!model_cfg.subtitle_enabled && corpus.has_subtitles()) {
    auto videos = corpus.videos();
    for (auto& v : videos) v.sub_feats.reset();
    video_only = Corpus(std::move(videos), corpus.queries(), corpus.splits());
    data = &video_only;
  }

  const std::size_t batches_per_epoch =
      make_batches(*data, train_queries, config.batch_size, model_cfg.n_neg, config.seed, 0).size();
  AdamWConfig opt_cfg;
  opt_cfg.lr = config.lr;
  opt_cfg.weight_decay = config.weight_decay;
  opt_cfg.warmup_proportion = config.warmup_proportion;
  opt_cfg.total_steps = batches_per_epoch * config.epochs;
  AdamW optimizer(opt_cfg);

  std::mt19937_64 dropout_rng(config.seed ^ 0x5eed'd20b'0f00ULL);
  ForwardContext ctx{true, model_cfg.dropout, &dropout_rng};
  const nlohmann::json ckpt_config = checkpoint_config(config);
  const auto eval_options = early_stop_eval(config);

  TrainResult result;
  result.best = make_checkpoint(ckpt_config, model.params);
  result.best_metric = -1.0;
  std::size_t since_improvement = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    LossReport sum;
    std::size_t count = 0;
    for (const auto& batch : make_batches(*data, train_queries, config.batch_size, model_cfg.n_neg, config.seed,
                                          epoch)) {
      const auto inputs = to_training_inputs<float>(*data, batch);
      model.params.zero_grad();
      try {
        auto out = batch_loss(model, inputs, config.gates, ctx);
        out.total.backward();
        if (config.grad_clip > 0.0) clip_gradients(model.params, config.grad_clip);
        optimizer.step(model.params);
        for (const auto& p : model.params.items())
          for (float x : p.tensor.data())
            if (!std::isfinite(x)) throw NumericError("parameter " + p.name + " became non-finite");
        ++step;
        auto line = loss_fields(out.report);
        line["type"] = "step";
        line["epoch"] = epoch;
        line["step"] = step;
        line["lr"] = optimizer.current_lr();
        write_line(log, line);
        sum.vr += out.report.vr;
        sum.ml += out.report.ml;
        sum.video_cl += out.report.video_cl;
        sum.frame_cl += out.report.frame_cl;
        sum.total += out.report.total;
        ++count;
      } catch (const NumericError& e) {
        if (abort_checkpoint) save_checkpoint(*abort_checkpoint, result.best);
        std::ostringstream msg;
        msg << "training aborted at epoch " << epoch << ", step " << step + 1 << ": " << e.what();
        if (abort_checkpoint) msg << "; last good checkpoint written to " << abort_checkpoint->string();
        write_line(log, {{"type", "abort"}, {"epoch", epoch}, {"step", step + 1}, {"reason", e.what()}});
        throw NumericError(msg.str());
      }
    }

    EpochSummary summary;
    summary.epoch = epoch;
    const double n = static_cast<double>(std::max<std::size_t>(count, 1));
    summary.mean_loss = {sum.vr / n, sum.ml / n, sum.video_cl / n, sum.frame_cl / n, sum.total / n};
    if (has_val) {
      const auto report = evaluate(model, *data, "val", eval_options);
      summary.val_metric = report.vcmr_at(1, 0.5);
      summary.val_vr_r1 = report.vr.at(1);
    }
    summary.improved = !has_val || summary.val_metric > result.best_metric;
    if (summary.improved) {
      result.best = make_checkpoint(ckpt_config, model.params);
      result.best_epoch = epoch;
      result.best_metric = summary.val_metric;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    result.history.push_back(summary);
    result.epochs_run = epoch + 1;

    auto line = loss_fields(summary.mean_loss);
    line["type"] = "epoch";
    line["epoch"] = epoch;
    line["val_vcmr_r1_iou0.5"] = summary.val_metric;
    line["val_vr_r1"] = summary.val_vr_r1;
    line["improved"] = summary.improved;
    write_line(log, line);

    if (has_val && config.patience > 0 && since_improvement >= config.patience && epoch + 1 >= config.min_epochs) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

FullLossCheck full_loss_gradient_check(std::uint64_t seed, double h) {
  SyntheticSpec spec;
  spec.train_videos = 2;
  spec.val_videos = 0;
  spec.n_v_min = 8;
  spec.n_v_max = 12;
  spec.n_q_min = 3;
  spec.n_q_max = 6;
  spec.n_q_pad = 6;
  spec.d_v = 10;
  spec.d_w = 8;
  spec.latent = 6;
  spec.moments_min = 2;
  spec.moments_max = 2;
  spec.seed = seed;
  const auto data = generate_synthetic_corpus(spec);
  const auto& corpus = data.corpus;

  ModelConfig cfg;
  cfg.d_v = spec.d_v;
  cfg.d_w = spec.d_w;
  cfg.d = 8;
  cfg.n_v_max = spec.n_v_max;
  cfg.n_q_max = spec.n_q_pad;
  cfg.heads = 2;
  cfg.d_ff = 12;
  cfg.dropout = 0.0;
  cfg.seed = seed;
  ReloclModel<double> model(cfg);

  std::vector<std::size_t> queries(corpus.queries().size());
  std::iota(queries.begin(), queries.end(), std::size_t{0});
  auto batches = make_batches(corpus, queries, queries.size(), cfg.n_neg, seed, 0);
  if (batches.size() != 1) throw ConfigError("gradient check batch must hold every query");
  const auto inputs = to_training_inputs<double>(corpus, batches.front());

  std::vector<Tensor<double>> params;
  for (const auto& p : model.params.items()) params.push_back(p.tensor);
  FullLossCheck out;
  out.videos = batches.front().videos.size();
  out.queries = batches.front().anchors.size();
  out.parameters = model.params.total_elements();
  out.result = gradient_check([&] { return batch_loss(model, inputs, ObjectiveGates{}, ForwardContext{}).total; },
                              params, h);
  return out;
}

}  // namespace relocl
