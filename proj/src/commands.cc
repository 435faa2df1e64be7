// voxlab/commands.cc

// Copyright 2026  The voxlab authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "voxlab/commands.h"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <memory>
#include <set>

#include "voxlab/corpus.h"
#include "voxlab/metrics.h"
#include "voxlab/teacher.h"
#include "voxlab/trainer.h"

namespace voxlab {

namespace fs = std::filesystem;

namespace {

std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tmv{};
  gmtime_r(&now, &tmv);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tmv);
  return buf;
}

// The run manifest carries provenance (paths, timestamps, git state); metric
// and loss files stay free of it so identical runs produce identical bytes.
void write_run_manifest(const fs::path& dir, const std::string& command,
                        const GlobalOpts& opts, const Json& extra,
                        const std::string& started_at) {
  Json m;
  m["command"] = command;
  m["command_line"] = opts.command_line;
  if (opts.seed.has_value()) m["seed"] = static_cast<int64_t>(*opts.seed);
  m["threads"] = opts.threads;
  m["deterministic"] = opts.deterministic;
  m["git"] = git_describe();
  m["out_dir"] = dir.string();
  m["started_at"] = started_at;
  m["finished_at"] = timestamp_utc();
  m["tool"] = "voxlab";
  for (const auto& [k, v] : extra.items()) m[k] = v;
  save_json_file(dir / "run_manifest.json", m);
}

ModelHandle load_model_for_eval(const EvalArgs& args) {
  fs::path path;
  if (args.checkpoint.has_value()) {
    path = *args.checkpoint;
  } else if (args.experiment.has_value()) {
    path = *args.experiment / "checkpoints" / "best.bin";
    VOXLAB_REQUIRE(fs::exists(path), ConfigError,
                   path.string() << ": experiment has no best checkpoint");
  } else {
    VOXLAB_THROW(ConfigError, "eval: either a checkpoint or an experiment directory "
                              "must be given");
  }
  VOXLAB_REQUIRE(fs::exists(path), ConfigError, path.string() << ": no such checkpoint");
  return ModelHandle(load_checkpoint(path));
}

Json probe_json(const ProbeResult& r) {
  Json j;
  j["layer"] = r.layer;
  j["stage"] = r.stage;
  j["task"] = r.task;
  j["train_accuracy"] = r.train_accuracy;
  j["valid_accuracy"] = r.valid_accuracy;
  j["test_accuracy"] = r.test_accuracy;
  j["num_classes"] = r.num_classes;
  j["chance"] = r.chance;
  return j;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

}  // namespace

const std::vector<std::string>& valid_metric_names() {
  static const std::vector<std::string> names{
      "sid_curve", "phone_probe", "pnmi", "abx_within",
      "abx_cross", "auto_bleu",   "dtw_l0"};
  return names;
}

fs::path cmd_gen_corpus(const fs::path& config_path, const fs::path& out,
                        const GlobalOpts& opts) {
  const std::string started = timestamp_utc();
  const Json cfg_json = load_json_file(config_path);
  CorpusConfig config = CorpusConfig::from_json(JsonView(cfg_json, "corpus"));
  if (opts.seed.has_value()) config.rng_seed = *opts.seed;

  const fs::path dir = prepare_out_dir(out, opts.force);
  const Corpus corpus = build_corpus(config);
  save_corpus(corpus, dir);

  Json extra;
  extra["config_path"] = config_path.string();
  extra["corpus_digest"] = hex64(corpus.digest);
  extra["num_utterances"] = corpus.utterances.size();
  extra["splits"] = Json{{"train", corpus.utterance_ids(Split::kTrain).size()},
                         {"valid", corpus.utterance_ids(Split::kValid).size()},
                         {"test", corpus.utterance_ids(Split::kTest).size()}};
  write_run_manifest(dir, "gen-corpus", opts, extra, started);
  std::printf("corpus: %zu utterances, %d speakers, digest %s -> %s\n",
              corpus.utterances.size(), config.num_speakers,
              hex64(corpus.digest).c_str(), dir.string().c_str());
  return dir;
}

fs::path cmd_make_teachers(const MakeTeachersArgs& args, const fs::path& out,
                           const GlobalOpts& opts) {
  const std::string started = timestamp_utc();
  const Corpus corpus = load_corpus(args.corpus_dir);

  TeacherConfig tc;
  tc.mode = teacher_mode_from_name(args.mode);
  tc.K = args.k;
  tc.normalize_beta = args.beta;
  tc.seed = opts.seed.value_or(args.seed);
  tc.model_layer = args.layer;

  UtteranceFeatureFn feature_fn = nullptr;
  if (tc.mode == TeacherMode::kModelLayer) {
    VOXLAB_REQUIRE(args.checkpoint.has_value(), ConfigError,
                   "make-teachers: model_layer mode requires --checkpoint");
    auto handle = std::make_shared<ModelHandle>(load_checkpoint(*args.checkpoint));
    int layer = args.layer;
    if (layer < 0) {
      layer = best_layer_by_pnmi(*handle, corpus, tc.K, tc.seed);
      std::printf("make-teachers: selected layer %d by PNMI\n", layer);
    }
    tc.model_layer = layer;
    feature_fn = [handle, layer](const Utterance& u) {
      const auto reps = handle->layer_reps(u);
      const auto& f = reps[static_cast<size_t>(layer)];
      Mat<double> d(f.rows, f.cols);
      for (size_t i = 0; i < f.v.size(); ++i) d.v[i] = static_cast<double>(f.v[i]);
      return d;
    };
  }

  const TeacherSet ts = generate_teacher_labels(corpus, tc, feature_fn);

  // PNMI of the teacher labels against ground-truth phones.
  std::vector<int32_t> clusters, phones;
  for (const auto& u : corpus.utterances) {
    const auto& l = ts.labels[static_cast<size_t>(u.id)];
    clusters.insert(clusters.end(), l.begin(), l.end());
    phones.insert(phones.end(), u.phone_labels.begin(), u.phone_labels.end());
  }
  const double teacher_pnmi = pnmi(clusters, phones);

  const fs::path dir = prepare_out_dir(out, opts.force);
  save_teacher_set(ts, corpus.digest, dir);
  Json summary;
  summary["pnmi"] = teacher_pnmi;
  summary["k"] = tc.K;
  summary["mode"] = teacher_mode_name(tc.mode);
  summary["normalize_beta"] = tc.normalize_beta;
  summary["empty_reseeds"] = ts.codebook.empty_reseeds;
  save_json_file(dir / "summary.json", summary);

  Json extra;
  extra["corpus_dir"] = args.corpus_dir.string();
  extra["corpus_digest"] = hex64(corpus.digest);
  extra["teacher_id"] = ts.id;
  extra["pnmi"] = teacher_pnmi;
  write_run_manifest(dir, "make-teachers", opts, extra, started);
  std::printf("teachers: mode=%s K=%d beta=%.3g PNMI=%.4f -> %s\n",
              teacher_mode_name(tc.mode), tc.K, tc.normalize_beta, teacher_pnmi,
              dir.string().c_str());
  return dir;
}

fs::path cmd_train(const TrainArgs& args, const fs::path& out, const GlobalOpts& opts) {
  const std::string started = timestamp_utc();
  const Json cfg_json = load_json_file(args.config_path);
  const Corpus corpus = load_corpus(args.corpus_dir);
  const TeacherSet teachers = load_teacher_set(args.teacher_dir, corpus.digest);

  // The teacher codebook fixes the class count unless the config pins it.
  Json patched = cfg_json;
  if (!patched.contains("model")) patched["model"] = Json::object();
  if (!patched["model"].contains("num_classes"))
    patched["model"]["num_classes"] = teachers.config.K;
  TrainConfig config = TrainConfig::from_json(JsonView(patched, "train"));
  if (opts.seed.has_value()) config.seed = *opts.seed;
  config.threads = opts.threads;
  config.deterministic = opts.deterministic;
  config.validate();

  const fs::path dir = prepare_out_dir(out, opts.force);
  save_json_file(dir / "config.json", config.to_json());
  const ExperimentRecord record = train(config, corpus, teachers, dir, args.resume);

  Json extra;
  extra["config_path"] = args.config_path.string();
  extra["corpus_dir"] = args.corpus_dir.string();
  extra["teacher_dir"] = args.teacher_dir.string();
  extra["corpus_digest"] = hex64(corpus.digest);
  extra["teacher_id"] = teachers.id;
  extra["variant"] = variant_name(config.variant);
  extra["best_step"] = record.best_step;
  extra["best_val_pred"] = record.best_val_pred;
  Json ckpts = Json::array();
  for (const auto& [step, rel] : record.checkpoint_files)
    ckpts.push_back(Json{{"step", step}, {"path", rel}});
  extra["checkpoints"] = std::move(ckpts);
  extra["best_checkpoint"] = "checkpoints/best.bin";
  write_run_manifest(dir, "train", opts, extra, started);
  std::printf("train: variant=%s steps=%lld best_step=%lld best_val_pred=%.5f -> %s\n",
              variant_name(config.variant),
              static_cast<long long>(config.total_steps),
              static_cast<long long>(record.best_step), record.best_val_pred,
              dir.string().c_str());
  return dir;
}

fs::path cmd_eval(const EvalArgs& args, const fs::path& out, const GlobalOpts& opts) {
  const std::string started = timestamp_utc();
  // Validate metric names first so typos fail fast.
  std::vector<std::string> metrics = args.metrics;
  if (metrics.empty()) metrics = valid_metric_names();
  for (const auto& m : metrics) {
    const auto& valid = valid_metric_names();
    if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
      std::string names;
      for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
      VOXLAB_THROW(ConfigError,
                   "eval: unknown metric '" << m << "' (valid: " << names << ")");
    }
  }
  const std::set<std::string> want(metrics.begin(), metrics.end());

  const Corpus corpus = load_corpus(args.corpus_dir);
  const ModelHandle model = load_model_for_eval(args);
  const int enc_layers = model.config().num_encoder_layers;
  const int feature_layer = args.layer >= 0 ? args.layer : enc_layers;
  VOXLAB_REQUIRE(feature_layer >= 0 && feature_layer < model.num_probe_layers(),
                 ConfigError, "eval: --layer out of range");
  const uint64_t seed = opts.seed.value_or(args.seed);

  const fs::path dir = prepare_out_dir(out, opts.force);
  fs::create_directories(dir / "metrics");

  Json report;
  report["corpus_digest"] = hex64(corpus.digest);
  report["checkpoint_step"] = model.step();
  report["feature_layer"] = feature_layer;
  report["model"] = model.config().to_json();
  Json jm = Json::object();

  // Continuous per-utterance features at the chosen layer, shared by the
  // ABX metrics.
  std::vector<Mat<double>> features;
  auto ensure_features = [&]() {
    if (!features.empty()) return;
    features.resize(corpus.utterances.size());
    for (const auto& u : corpus.utterances) {
      const auto reps = model.layer_reps(u);
      const auto& f = reps[static_cast<size_t>(feature_layer)];
      Mat<double> d(f.rows, f.cols);
      for (size_t i = 0; i < f.v.size(); ++i) d.v[i] = static_cast<double>(f.v[i]);
      features[static_cast<size_t>(u.id)] = std::move(d);
    }
  };

  // Discrete labels from the chosen layer, shared by pnmi/auto_bleu/dtw_l0.
  std::optional<QuantizedLabels> quantized;
  auto ensure_quantized = [&]() {
    if (quantized.has_value()) return;
    quantized = quantize_model_layer(model, corpus, feature_layer,
                                     model.config().num_classes,
                                     Rng(seed).child("quantize").seed());
  };

  if (want.count("sid_curve")) {
    const auto curve = layerwise_sid_curve(model, corpus);
    Json arr = Json::array();
    std::string csv = "layer,task,accuracy\n";
    for (const auto& r : curve) {
      arr.push_back(probe_json(r));
      csv += std::to_string(r.layer) + ",sid," + format_double(r.test_accuracy) + "\n";
    }
    jm["sid_curve"] = std::move(arr);
    write_file_text(dir / "metrics" / "sid_curve.csv", csv);
  }
  if (want.count("phone_probe")) {
    const auto r = phone_probe(model, corpus, feature_layer, {}, 20000,
                               Rng(seed).child("phone_probe").seed());
    jm["phone_probe"] = probe_json(r);
  }
  if (want.count("pnmi")) {
    ensure_quantized();
    std::vector<int32_t> clusters, phones;
    for (const auto& u : corpus.utterances) {
      if (u.split != Split::kTest) continue;
      const auto& l = quantized->labels[static_cast<size_t>(u.id)];
      clusters.insert(clusters.end(), l.begin(), l.end());
      phones.insert(phones.end(), u.phone_labels.begin(), u.phone_labels.end());
    }
    jm["pnmi"] = pnmi(clusters, phones);
  }
  if (want.count("abx_within") || want.count("abx_cross")) {
    ensure_features();
    if (want.count("abx_within")) {
      const auto tasks = build_abx_tasks(corpus, features, AbxMode::kWithin,
                                         args.abx_triplets,
                                         Rng(seed).child("abx_within").seed());
      jm["abx_within"] = abx_score(tasks);
    }
    if (want.count("abx_cross")) {
      const auto tasks = build_abx_tasks(corpus, features, AbxMode::kCross,
                                         args.abx_triplets,
                                         Rng(seed).child("abx_cross").seed());
      jm["abx_cross"] = abx_score(tasks);
    }
  }
  if (want.count("auto_bleu")) {
    ensure_quantized();
    Json ab = Json::object();
    for (const int k : {1, 2, 3}) {
      double total = 0;
      int64_t count = 0;
      for (const auto& u : corpus.utterances) {
        if (u.split != Split::kTest) continue;
        const auto& l = quantized->labels[static_cast<size_t>(u.id)];
        if (static_cast<int>(l.size()) < k) continue;
        total += auto_bleu(l, k);
        ++count;
      }
      ab["k" + std::to_string(k)] = count > 0 ? total / static_cast<double>(count) : 0.0;
    }
    jm["auto_bleu"] = std::move(ab);
  }
  if (want.count("dtw_l0")) {
    ensure_quantized();
    // Ranks from the train split, cross-group aligned pairs from test.
    std::vector<std::vector<int32_t>> train_labels(corpus.utterances.size());
    for (const auto& u : corpus.utterances) {
      if (u.split == Split::kTrain)
        train_labels[static_cast<size_t>(u.id)] =
            quantized->labels[static_cast<size_t>(u.id)];
    }
    const auto rank = rank_labels_by_group(train_labels, corpus,
                                           model.config().num_classes);
    jm["dtw_l0"] = mean_cross_group_dtw_l0(corpus, quantized->labels, rank,
                                           Split::kTest, 400,
                                           Rng(seed).child("dtw_pairs").seed());
  }

  report["metrics"] = std::move(jm);
  save_json_file(dir / "metrics" / "report.json", report);

  Json extra;
  extra["corpus_dir"] = args.corpus_dir.string();
  if (args.checkpoint.has_value()) extra["checkpoint"] = args.checkpoint->string();
  if (args.experiment.has_value()) extra["experiment"] = args.experiment->string();
  extra["metrics"] = metrics;
  write_run_manifest(dir, "eval", opts, extra, started);
  std::printf("eval: %zu metric(s) -> %s\n", want.size(),
              (dir / "metrics" / "report.json").string().c_str());
  return dir;
}

namespace {

double final_layer_sid(const Json& report) {
  const auto& curve = report.at("metrics").at("sid_curve");
  const int enc_layers = report.at("model").at("num_encoder_layers").get<int>();
  for (const auto& row : curve) {
    if (row.at("layer").get<int>() == enc_layers)
      return row.at("test_accuracy").get<double>();
  }
  VOXLAB_THROW(ConfigError, "compare: report has no encoder-output SID entry");
}

Json load_report(const fs::path& p) {
  const fs::path direct = p / "metrics" / "report.json";
  if (fs::exists(direct)) return load_json_file(direct);
  VOXLAB_REQUIRE(fs::exists(p) && p.filename() == "report.json", ConfigError,
                 p.string() << ": not an eval output (expected metrics/report.json)");
  return load_json_file(p);
}

}  // namespace

fs::path cmd_compare(const fs::path& report_a, const fs::path& report_b,
                     const fs::path& out, const GlobalOpts& opts) {
  const std::string started = timestamp_utc();
  const Json a = load_report(report_a);
  const Json b = load_report(report_b);

  Json cmp;
  cmp["a"] = a;
  cmp["b"] = b;
  Json deltas = Json::object();
  if (a.at("metrics").contains("sid_curve") && b.at("metrics").contains("sid_curve")) {
    const double sa = final_layer_sid(a);
    const double sb = final_layer_sid(b);
    deltas["final_layer_sid_a"] = sa;
    deltas["final_layer_sid_b"] = sb;
    if (sb > 0) {
      // Relative reduction of A against B, in percent.
      deltas["sid_relative_reduction_pct"] = 100.0 * (sb - sa) / sb;
    }
  }
  for (const std::string key : {"pnmi", "abx_within", "abx_cross", "dtw_l0"}) {
    if (a.at("metrics").contains(key) && b.at("metrics").contains(key)) {
      deltas[key + "_a"] = a.at("metrics").at(key);
      deltas[key + "_b"] = b.at("metrics").at(key);
    }
  }
  cmp["deltas"] = deltas;

  const fs::path dir = prepare_out_dir(out, opts.force);
  save_json_file(dir / "comparison.json", cmp);
  if (deltas.contains("sid_relative_reduction_pct")) {
    std::printf("compare: final-layer SID %.4f vs %.4f, relative reduction %.1f%%\n",
                deltas["final_layer_sid_a"].get<double>(),
                deltas["final_layer_sid_b"].get<double>(),
                deltas["sid_relative_reduction_pct"].get<double>());
  }
  Json extra;
  extra["report_a"] = report_a.string();
  extra["report_b"] = report_b.string();
  write_run_manifest(dir, "compare", opts, extra, started);
  return dir;
}

fs::path cmd_report(const std::vector<fs::path>& reports, const fs::path& out,
                    const GlobalOpts& opts) {
  const std::string started = timestamp_utc();
  VOXLAB_REQUIRE(!reports.empty(), ConfigError, "report: no inputs given");
  const fs::path dir = prepare_out_dir(out, opts.force);

  std::string csv = "name,final_layer_sid,phone_probe,pnmi,abx_within,abx_cross,dtw_l0\n";
  std::string md = "| run | SID (enc out) | phone | PNMI | ABX-w | ABX-x | DTW-L0 |\n";
  md += "|---|---|---|---|---|---|---|\n";
  Json all = Json::array();
  for (const auto& p : reports) {
    const Json r = load_report(p);
    const auto& m = r.at("metrics");
    auto get = [&](const std::string& key) -> std::string {
      if (!m.contains(key)) return "";
      return format_double(m.at(key).get<double>());
    };
    std::string sid;
    if (m.contains("sid_curve")) sid = format_double(final_layer_sid(r));
    std::string phone;
    if (m.contains("phone_probe"))
      phone = format_double(m.at("phone_probe").at("test_accuracy").get<double>());
    const std::string name = p.filename().string().empty()
                                 ? p.parent_path().filename().string()
                                 : p.filename().string();
    csv += name + "," + sid + "," + phone + "," + get("pnmi") + "," +
           get("abx_within") + "," + get("abx_cross") + "," + get("dtw_l0") + "\n";
    md += "| " + name + " | " + sid + " | " + phone + " | " + get("pnmi") + " | " +
          get("abx_within") + " | " + get("abx_cross") + " | " + get("dtw_l0") +
          " |\n";
    Json entry;
    entry["name"] = name;
    entry["report"] = r;
    all.push_back(std::move(entry));
  }
  write_file_text(dir / "summary.csv", csv);
  write_file_text(dir / "summary.md", md);
  save_json_file(dir / "summary.json", all);

  Json extra;
  Json inputs = Json::array();
  for (const auto& p : reports) inputs.push_back(p.string());
  extra["inputs"] = std::move(inputs);
  write_run_manifest(dir, "report", opts, extra, started);
  std::printf("report: %zu run(s) -> %s\n", reports.size(),
              (dir / "summary.md").string().c_str());
  return dir;
}

}  // namespace voxlab
