// tests/test_commands.cc

#include <cstdlib>
#include <filesystem>

#include <doctest.h>

#include "voxlab/commands.h"
#include "voxlab/corpus.h"
#include "voxlab/io.h"
#include "voxlab/metrics.h"
#include "voxlab/model.h"

using namespace voxlab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Json tiny_corpus_json(uint64_t seed) {
  Json j;
  j["num_phones"] = 10;
  j["feat_dim"] = 20;
  j["num_speakers"] = 6;
  j["utterances_per_speaker"] = 8;
  j["valid_per_speaker"] = 2;
  j["test_per_speaker"] = 2;
  j["tokens_per_utterance"] = 6;
  j["content_pool_size"] = 12;
  j["held_out_content"] = 3;
  j["noise_std"] = 0.03;
  j["rng_seed"] = static_cast<int64_t>(seed);
  return j;
}

Json tiny_train_json() {
  Json j;
  j["variant"] = "contentvec";
  j["total_steps"] = 30;
  j["batch_size"] = 4;
  j["eval_every"] = 10;
  j["checkpoint_every"] = 15;
  j["seed"] = 21;
  j["lambda_max"] = 10.0;
  Json m;
  m["num_encoder_layers"] = 2;
  m["model_dim"] = 16;
  m["num_heads"] = 2;
  m["ffn_dim"] = 32;
  m["predictor_layers"] = 1;
  m["layer_drop_p"] = 0.05;
  m["mask_prob"] = 0.12;
  m["mask_span"] = 3;
  m["speaker_embed_dim"] = 4;
  m["final_proj_dim"] = 8;
  m["contrastive_layer"] = 1;
  j["model"] = m;
  Json c;
  c["num_negatives"] = 6;
  j["contrastive"] = c;
  return j;
}

struct Pipeline {
  fs::path corpus;
  fs::path teachers;
  fs::path experiment;
  fs::path eval;
};

Pipeline run_pipeline(const fs::path& root, uint64_t seed) {
  GlobalOpts opts;
  opts.command_line = "(in-process test)";
  const fs::path cfg = root / "corpus.json";
  save_json_file(cfg, tiny_corpus_json(seed));

  Pipeline p;
  p.corpus = cmd_gen_corpus(cfg, root / "corpus", opts);

  MakeTeachersArgs mk;
  mk.corpus_dir = p.corpus;
  mk.mode = "normalized_frames";
  mk.k = 12;
  mk.beta = 1.0;
  mk.seed = seed;
  p.teachers = cmd_make_teachers(mk, root / "teachers", opts);

  const fs::path tcfg = root / "train.json";
  save_json_file(tcfg, tiny_train_json());
  TrainArgs tr;
  tr.config_path = tcfg;
  tr.corpus_dir = p.corpus;
  tr.teacher_dir = p.teachers;
  GlobalOpts train_opts = opts;
  train_opts.seed = seed;
  p.experiment = cmd_train(tr, root / "run", train_opts);

  EvalArgs ev;
  ev.experiment = p.experiment;
  ev.corpus_dir = p.corpus;
  ev.metrics = {"sid_curve", "pnmi", "auto_bleu", "dtw_l0"};
  ev.abx_triplets = 20;
  ev.seed = seed;
  p.eval = cmd_eval(ev, root / "eval", opts);
  return p;
}

}  // namespace

TEST_CASE("full pipeline through the command layer") {
  const fs::path root = fresh_dir("voxlab_cmd_pipeline");
  const Pipeline p = run_pipeline(root, 4242);

  // Corpus directory is loadable and matches its manifest digest.
  const Corpus corpus = load_corpus(p.corpus);
  CHECK(corpus.utterances.size() == 48);

  // Teachers with a summary; full conversion on a noisy corpus still yields
  // perfectly phone-pure labels because the converter re-renders cleanly.
  const Json summary = load_json_file(p.teachers / "summary.json");
  CHECK(summary.at("pnmi").get<double>() == doctest::Approx(1.0));

  // The experiment directory carries config, losses, checkpoints, manifest.
  CHECK(fs::exists(p.experiment / "config.json"));
  CHECK(fs::exists(p.experiment / "losses.csv"));
  CHECK(fs::exists(p.experiment / "valid.csv"));
  CHECK(fs::exists(p.experiment / "checkpoints" / "best.bin"));
  const Json run_manifest = load_json_file(p.experiment / "run_manifest.json");
  CHECK(run_manifest.at("variant").get<std::string>() == "contentvec");
  CHECK(run_manifest.at("command").get<std::string>() == "train");

  // Eval report: one SID row per probe layer.
  const Json report = load_json_file(p.eval / "metrics" / "report.json");
  const auto& curve = report.at("metrics").at("sid_curve");
  CHECK(curve.size() == 2 + 1 + 1);  // encoder 0..2 plus one predictor layer
  CHECK(fs::exists(p.eval / "metrics" / "sid_curve.csv"));
  CHECK(report.at("metrics").contains("pnmi"));
  CHECK(report.at("metrics").at("auto_bleu").contains("k2"));
  CHECK(report.at("metrics").contains("dtw_l0"));

  fs::remove_all(root);
}

TEST_CASE("pipeline determinism: identical seeds give identical bytes") {
  const fs::path root_a = fresh_dir("voxlab_cmd_det_a");
  const fs::path root_b = fresh_dir("voxlab_cmd_det_b");
  const Pipeline a = run_pipeline(root_a, 777);
  const Pipeline b = run_pipeline(root_b, 777);

  CHECK(read_file_bytes(a.experiment / "losses.csv") ==
        read_file_bytes(b.experiment / "losses.csv"));
  CHECK(read_file_bytes(a.experiment / "valid.csv") ==
        read_file_bytes(b.experiment / "valid.csv"));
  CHECK(read_file_bytes(a.eval / "metrics" / "report.json") ==
        read_file_bytes(b.eval / "metrics" / "report.json"));

  // A different seed changes the artifacts.
  const fs::path root_c = fresh_dir("voxlab_cmd_det_c");
  const Pipeline c = run_pipeline(root_c, 778);
  CHECK(read_file_bytes(a.experiment / "losses.csv") !=
        read_file_bytes(c.experiment / "losses.csv"));

  fs::remove_all(root_a);
  fs::remove_all(root_b);
  fs::remove_all(root_c);
}

TEST_CASE("compare and report join eval outputs") {
  const fs::path root = fresh_dir("voxlab_cmd_compare");
  const Pipeline p = run_pipeline(root, 31);
  GlobalOpts opts;

  const fs::path cmp = cmd_compare(p.eval, p.eval, root / "cmp", opts);
  const Json out = load_json_file(cmp / "comparison.json");
  CHECK(out.at("deltas").at("sid_relative_reduction_pct").get<double>() ==
        doctest::Approx(0.0));

  const fs::path rep = cmd_report({p.eval}, root / "rep", opts);
  CHECK(fs::exists(rep / "summary.csv"));
  CHECK(fs::exists(rep / "summary.md"));
  fs::remove_all(root);
}

TEST_CASE("config validation failures carry field paths") {
  const fs::path root = fresh_dir("voxlab_cmd_badcfg");
  GlobalOpts opts;
  Json bad = tiny_corpus_json(1);
  bad["num_speakers"] = 1;
  const fs::path cfg = root / "bad.json";
  save_json_file(cfg, bad);
  CHECK_THROWS_WITH_AS(cmd_gen_corpus(cfg, root / "corpus", opts),
                       doctest::Contains("num_speakers"), ConfigError);
  fs::remove_all(root);
}

TEST_CASE("unknown metric names list the valid ones") {
  const fs::path root = fresh_dir("voxlab_cmd_badmetric");
  EvalArgs ev;
  ev.checkpoint = root / "missing.bin";
  ev.corpus_dir = root;
  ev.metrics = {"sid_curve", "abx_weird"};
  GlobalOpts opts;
  CHECK_THROWS_WITH_AS(
      cmd_eval(ev, root / "eval", opts),
      doctest::Contains(
          "sid_curve, phone_probe, pnmi, abx_within, abx_cross, auto_bleu, dtw_l0"),
      ConfigError);
  fs::remove_all(root);
}

TEST_CASE("output directories are never overwritten without --force") {
  const fs::path root = fresh_dir("voxlab_cmd_nooverwrite");
  GlobalOpts opts;
  const fs::path cfg = root / "corpus.json";
  save_json_file(cfg, tiny_corpus_json(3));
  const fs::path first = cmd_gen_corpus(cfg, root / "corpus", opts);
  const fs::path second = cmd_gen_corpus(cfg, root / "corpus", opts);
  CHECK(first != second);
  CHECK(fs::exists(first / "manifest.json"));
  CHECK(fs::exists(second / "manifest.json"));

  GlobalOpts forced = opts;
  forced.force = true;
  const fs::path third = cmd_gen_corpus(cfg, root / "corpus", forced);
  CHECK(third == first);
  fs::remove_all(root);
}

TEST_CASE("CLI binary maps errors to exit codes") {
  const fs::path root = fresh_dir("voxlab_cmd_exitcodes");
  const std::string cli = VOXLAB_CLI_PATH;

  // Usage error: unknown subcommand.
  int rc = std::system((cli + " frobnicate >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // Config error: invalid corpus config.
  Json bad = tiny_corpus_json(1);
  bad["num_speakers"] = 1;
  const fs::path cfg = root / "bad.json";
  save_json_file(cfg, bad);
  rc = std::system((cli + " gen-corpus --config " + cfg.string() + " --out " +
                    (root / "out").string() + " >/dev/null 2>&1")
                       .c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // Success path.
  Json good = tiny_corpus_json(9);
  const fs::path goodcfg = root / "good.json";
  save_json_file(goodcfg, good);
  rc = std::system((cli + " gen-corpus --config " + goodcfg.string() + " --out " +
                    (root / "corpus").string() + " >/dev/null 2>&1")
                       .c_str());
  CHECK(WEXITSTATUS(rc) == 0);

  // Runtime error: evaluating a missing checkpoint... is a config error (2);
  // a corrupt checkpoint file is a runtime error (3).
  write_file_text(root / "corrupt.bin", "not a checkpoint");
  rc = std::system((cli + " eval --checkpoint " + (root / "corrupt.bin").string() +
                    " --corpus " + (root / "corpus").string() + " --out " +
                    (root / "eval").string() + " >/dev/null 2>&1")
                       .c_str());
  CHECK(WEXITSTATUS(rc) == 3);

  fs::remove_all(root);
}
