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

// Command-line front end: data generation, training, indexing, retrieval,
// evaluation, benchmarking and gradient checking.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "relocl/metrics.hpp"
#include "relocl/retrieval.hpp"
#include "relocl/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace relocl {
namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_text(const std::optional<fs::path>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path->string());
  out << text;
  if (!out) throw DataError("write failed: " + path->string());
}

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

ObjectiveGates parse_gates(const std::string& spec) {
  if (spec == "relocl" || spec == "all") return {true, true, true, true};
  if (spec == "relo") return {true, true, false, false};
  ObjectiveGates g{false, false, false, false};
  std::stringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "vr") g.vr = true;
    else if (item == "ml") g.ml = true;
    else if (item == "videocl") g.video_cl = true;
    else if (item == "framecl") g.frame_cl = true;
    else throw UsageError("unknown objective '" + item + "' (expected vr, ml, videocl, framecl)");
  }
  return g;
}

struct RetrievalFlags {
  std::size_t k = 0, top_n = 0, l_max = 0, threads = 1;
  double gamma = -1;
  bool k_set = false, top_n_set = false, l_max_set = false;

  void add(CLI::App* app) {
    app->add_option("--k", k, "videos kept by the retrieval stage")->check(CLI::PositiveNumber);
    app->add_option("--top-n", top_n, "spans kept per retrieved video")->check(CLI::PositiveNumber);
    app->add_option("--l-max", l_max, "longest span in clip units (0 = no cap)");
    app->add_option("--gamma", gamma, "video score weight in the moment score")->check(CLI::NonNegativeNumber);
    app->add_option("--threads", threads, "scoring threads")->check(CLI::PositiveNumber);
  }

  // Flags override the values stored in the checkpoint's run config.
  RetrievalParams resolve(const TrainedModel& trained, CLI::App* app) const {
    RetrievalParams p;
    const auto& m = trained.model->config;
    p.k = m.top_k;
    p.top_n = m.top_n;
    p.l_max = m.l_max;
    p.gamma = m.gamma;
    if (trained.config.contains("run") && trained.config.at("run").contains("eval")) {
      const auto& e = trained.config.at("run").at("eval");
      p.k = e.value("k", p.k);
      p.top_n = e.value("top_n", p.top_n);
      p.l_max = e.value("l_max", p.l_max);
      p.gamma = e.value("gamma", p.gamma);
    }
    if (app->count("--k")) p.k = k;
    if (app->count("--top-n")) p.top_n = top_n;
    if (app->count("--l-max")) p.l_max = l_max;
    if (app->count("--gamma")) p.gamma = gamma;
    p.threads = threads;
    return p;
  }
};

std::vector<std::size_t> split_or_all(const Corpus& corpus, const std::string& split, bool videos) {
  if (split == "all") {
    std::vector<std::size_t> all(videos ? corpus.videos().size() : corpus.queries().size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  if (split != "train" && split != "val") throw UsageError("split must be train, val or all");
  return videos ? corpus.split_videos(split) : corpus.split_queries(split);
}

std::vector<VideoRecord> select_videos(const Corpus& corpus, const std::string& split) {
  std::vector<VideoRecord> out;
  for (auto i : split_or_all(corpus, split, true)) out.push_back(corpus.videos()[i]);
  return out;
}

json prediction_json(const MomentPrediction& p) {
  return {{"video_id", p.video_id}, {"i_s", p.span.start}, {"i_e", p.span.end},
          {"p_se", p.p_se},         {"phi", p.phi},         {"delta", p.delta}};
}

// ---- subcommands ----

struct GenData {
  std::string out, spec_path;
  std::uint64_t seed = 1;
  std::size_t train_videos = 0, val_videos = 0;
  bool no_subtitles = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("gen-data", "generate a seeded synthetic corpus");
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--spec", spec_path, "JSON file with generator settings");
    app->add_option("--seed", seed, "generator seed");
    app->add_option("--train-videos", train_videos, "training videos");
    app->add_option("--val-videos", val_videos, "validation videos");
    app->add_flag("--no-subtitles", no_subtitles, "omit the subtitle stream");
    app->callback([this, app] { run(app); });
  }

  void run(CLI::App* app) {
    SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : read_json_file(spec_path).get<SyntheticSpec>();
    if (app->count("--seed") || spec_path.empty()) spec.seed = seed;
    if (app->count("--train-videos")) spec.train_videos = train_videos;
    if (app->count("--val-videos")) spec.val_videos = val_videos;
    if (no_subtitles) spec.subtitles = false;
    const auto data = generate_synthetic_corpus(spec);
    save_corpus(data.corpus, out);
    write_text(fs::path(out) / "spec.json", json(spec).dump(2) + "\n");
    json summary{{"videos", data.corpus.videos().size()},
                 {"queries", data.corpus.queries().size()},
                 {"train_videos", data.corpus.splits().train.size()},
                 {"val_videos", data.corpus.splits().val.size()},
                 {"planted_oracle_train_vr_r1", planted_oracle_recall_at_1(data, "train")}};
    std::cout << summary.dump() << "\n";
  }
};

struct Train {
  std::string data, out, config_path, profile = "desk", log_path, gates;
  std::uint64_t seed = 1;
  std::size_t epochs = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "train a model and keep the best validation checkpoint");
    app->add_option("--data", data, "corpus directory")->required();
    app->add_option("--out", out, "checkpoint path")->required();
    app->add_option("--config", config_path, "JSON file mirroring the run config");
    app->add_option("--profile", profile, "base hyper-parameters")->check(CLI::IsMember({"desk", "paper"}));
    app->add_option("--seed", seed, "run seed");
    app->add_option("--epochs", epochs, "epoch budget")->check(CLI::PositiveNumber);
    app->add_option("--gates", gates, "objectives: relo, relocl, or a list of vr,ml,videocl,framecl");
    app->add_option("--log", log_path, "JSON-lines training log (default: <out>.log.jsonl)");
    app->callback([this, app] { run(app); });
  }

  void run(CLI::App* app) {
    json base = profile == "paper" ? json(paper_run()) : json(desk_run());
    if (!config_path.empty()) base.merge_patch(read_json_file(config_path));
    auto config = base.get<RunConfig>();
    if (app->count("--seed") || config_path.empty()) config.seed = seed;
    if (app->count("--epochs")) config.epochs = epochs;
    if (!gates.empty()) config.gates = parse_gates(gates);
    config.validate();

    const auto corpus = load_corpus(data);
    const fs::path log_file = log_path.empty() ? fs::path(out + ".log.jsonl") : fs::path(log_path);
    std::ofstream log(log_file, std::ios::binary);
    if (!log) throw DataError("cannot write " + log_file.string());
    const auto result = train(config, corpus, &log, fs::path(out + ".abort"));
    save_checkpoint(out, result.best);
    json summary{{"checkpoint", out},
                 {"fingerprint", to_hex(checkpoint_fingerprint(result.best))},
                 {"epochs_run", result.epochs_run},
                 {"best_epoch", result.best_epoch},
                 {"best_val_vcmr_r1_iou0.5", result.best_metric},
                 {"stopped_early", result.stopped_early},
                 {"log", log_file.string()}};
    std::cout << summary.dump() << "\n";
  }
};

struct EncodeCorpus {
  std::string checkpoint, data, out, split = "all";

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("encode-corpus", "encode videos once and write the retrieval index");
    app->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    app->add_option("--data", data, "corpus directory")->required();
    app->add_option("--split", split, "train, val or all");
    app->add_option("--out", out, "index path")->required();
    app->callback([this] { run(); });
  }

  void run() {
    const auto trained = load_trained_model(checkpoint);
    const auto corpus = load_corpus(data);
    const auto videos = select_videos(corpus, split);
    const auto index = build_corpus_index(*trained.model, trained.fingerprint, videos);
    save_index(out, index);
    std::cout << json{{"index", out}, {"videos", index.entries.size()}, {"fingerprint", to_hex(index.fingerprint)}}
                     .dump()
              << "\n";
  }
};

struct Retrieve {
  std::string checkpoint, index_path, queries, split = "val", out;
  RetrievalFlags flags;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("retrieve", "rank moments across an indexed corpus");
    app->add_option("--checkpoint", checkpoint, "checkpoint the index was built from")->required();
    app->add_option("--index", index_path, "index from encode-corpus")->required();
    app->add_option("--queries", queries, "corpus directory holding the queries")->required();
    app->add_option("--split", split, "query split: train, val or all");
    app->add_option("--out", out, "JSON-lines output (default: stdout)");
    flags.add(app);
    app->callback([this, app] { run(app); });
  }

  void run(CLI::App* app) {
    const auto trained = load_trained_model(checkpoint);
    const auto& m = trained.model->config;
    const auto index = load_index(index_path, m.d, m.subtitle_enabled);
    index.require_fingerprint(trained.fingerprint);
    const auto params = flags.resolve(trained, app);
    const auto corpus = load_corpus(queries);
    std::ostringstream lines;
    for (auto qi : split_or_all(corpus, split, false)) {
      const auto& q = corpus.queries()[qi];
      const auto encoded = encode_query_vectors(*trained.model, q);
      json results = json::array();
      for (const auto& p : vcmr_rank(encoded, index.entries, trained.model->boundary, params)) {
        results.push_back(prediction_json(p));
      }
      lines << json{{"query_id", q.query_id}, {"results", results}}.dump() << "\n";
    }
    write_text(opt_path(out), lines.str());
  }
};

struct Eval {
  std::string checkpoint, data, split = "val", index_path, out, curves;
  std::vector<double> mu_grid;
  RetrievalFlags flags;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("eval", "compute recall metrics on a corpus split");
    app->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    app->add_option("--data", data, "corpus directory")->required();
    app->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
    app->add_option("--index", index_path, "prebuilt index of the split's videos");
    app->add_option("--mu-grid", mu_grid, "IoU thresholds for the recall curves");
    app->add_option("--out", out, "report JSON (default: stdout)");
    app->add_option("--curves", curves, "recall-vs-IoU CSV");
    flags.add(app);
    app->callback([this, app] { run(app); });
  }

  void run(CLI::App* app) {
    const auto trained = load_trained_model(checkpoint);
    const auto corpus = load_corpus(data);
    EvalOptions options;
    options.retrieval = flags.resolve(trained, app);
    if (!mu_grid.empty()) options.mu_grid = mu_grid;
    std::optional<CorpusIndex> index;
    if (!index_path.empty()) {
      const auto& m = trained.model->config;
      index = load_index(index_path, m.d, m.subtitle_enabled);
      index->require_fingerprint(trained.fingerprint);
    }
    const auto outputs = run_evaluation(*trained.model, corpus, split, options, index ? &*index : nullptr);
    const auto report = report_from_outputs(outputs, corpus.split_videos(split).size(), options);
    report.check_invariants();
    write_text(opt_path(out), json(report).dump(2) + "\n");
    if (!curves.empty()) write_text(fs::path(curves), recall_curves_csv(report));
  }
};

struct Bench {
  std::string checkpoint, out;
  std::uint64_t seed = 1;
  std::size_t videos = 500, queries = 100;
  RetrievalFlags flags;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("bench", "time precomputed-index retrieval against per-pair re-encoding");
    app->add_option("--checkpoint", checkpoint, "trained checkpoint (default: seeded untrained model)");
    app->add_option("--seed", seed, "corpus and model seed");
    app->add_option("--videos", videos, "indexed videos")->check(CLI::PositiveNumber);
    app->add_option("--queries", queries, "timed queries")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "result JSON (default: stdout)");
    flags.add(app);
    app->callback([this, app] { run(app); });
  }

  void run(CLI::App* app) {
    TrainedModel trained;
    if (checkpoint.empty()) {
      auto config = desk_run();
      config.seed = seed;
      ReloclModel<float> fresh(config.model);
      trained = model_from_checkpoint(make_checkpoint(checkpoint_config(config), fresh.params));
    } else {
      trained = load_trained_model(checkpoint);
    }
    const auto& m = trained.model->config;
    SyntheticSpec spec;
    spec.train_videos = videos;
    spec.val_videos = 0;
    spec.d_v = m.d_v;
    spec.d_w = m.d_w;
    spec.n_v_max = std::min(spec.n_v_max, m.n_v_max);
    spec.n_q_pad = m.n_q_max;
    spec.n_q_max = std::min(spec.n_q_max, m.n_q_max);
    spec.subtitles = m.subtitle_enabled;
    spec.seed = seed;
    const auto data = generate_synthetic_corpus(spec);
    const auto& all = data.corpus.queries();
    if (all.size() < queries) throw ConfigError("corpus holds fewer queries than requested");
    std::span<const QueryAnnotation> timed(all.data(), queries);
    const auto params = flags.resolve(trained, app);
    const auto index = build_corpus_index(*trained.model, trained.fingerprint, data.corpus.videos());
    const auto pre = bench_retrieval(*trained.model, index, data.corpus.videos(), timed, BenchMode::kPrecomputed, params);
    const auto re = bench_retrieval(*trained.model, index, data.corpus.videos(), timed, BenchMode::kReencode, params);
    bool identical = pre.rankings.size() == re.rankings.size();
    for (std::size_t q = 0; identical && q < pre.rankings.size(); ++q) {
      const auto& a = pre.rankings[q];
      const auto& b = re.rankings[q];
      identical = a.size() == b.size();
      for (std::size_t i = 0; identical && i < a.size(); ++i) {
        identical = a[i].video_id == b[i].video_id && a[i].span == b[i].span && a[i].delta == b[i].delta;
      }
    }
    json result{{"videos", videos},
                {"queries", queries},
                {"threads", params.threads},
                {"precomputed_mean_seconds", pre.mean_seconds},
                {"reencode_mean_seconds", re.mean_seconds},
                {"speedup", pre.mean_seconds > 0 ? re.mean_seconds / pre.mean_seconds : 0.0},
                {"identical_rankings", identical}};
    write_text(opt_path(out), result.dump(2) + "\n");
    if (!identical) throw NumericError("precomputed and re-encode rankings differ");
  }
};

struct GradCheck {
  std::uint64_t seed = 1;
  double h = 1e-4, tolerance = 1e-4;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("grad-check", "central-difference check of the full training loss");
    app->add_option("--seed", seed, "batch and model seed");
    app->add_option("--step", h, "finite-difference step")->check(CLI::PositiveNumber);
    app->add_option("--tolerance", tolerance, "largest accepted relative error")->check(CLI::PositiveNumber);
    app->callback([this] { run(); });
  }

  void run() {
    const auto check = full_loss_gradient_check(seed, h);
    const auto& r = check.result;
    const bool pass = r.max_rel_error <= tolerance;
    std::cout << json{{"videos", check.videos},
                      {"queries", check.queries},
                      {"parameters", check.parameters},
                      {"checked", r.checked},
                      {"excluded_at_kinks", r.excluded},
                      {"max_rel_error", r.max_rel_error},
                      {"tolerance", tolerance},
                      {"pass", pass}}
                     .dump()
              << "\n";
    if (!pass) throw NumericError("gradient check exceeded tolerance");
  }
};

}  // namespace
}  // namespace relocl

int main(int argc, char** argv) {
  CLI::App app{"relocl: two-stage video corpus moment retrieval"};
  app.require_subcommand(1);
  relocl::GenData gen_data;
  relocl::Train train;
  relocl::EncodeCorpus encode;
  relocl::Retrieve retrieve;
  relocl::Eval eval;
  relocl::Bench bench;
  relocl::GradCheck grad_check;
  gen_data.add(app);
  train.add(app);
  encode.add(app);
  retrieve.add(app);
  eval.add(app);
  bench.add(app);
  grad_check.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const relocl::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const relocl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const relocl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const relocl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
