// tools/main.cc

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

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "voxlab/commands.h"
#include "voxlab/common.h"

namespace {

// 0 success, 2 config/validation error, 3 runtime/numeric error.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "voxlab: a synthetic-world lab for speaker-disentangled masked-prediction "
      "training and its evaluation suite"};
  app.require_subcommand(1);

  voxlab::GlobalOpts opts;
  opts.command_line = join_args(argc, argv);
  uint64_t seed_flag = 0;
  bool seed_given = false;
  app.add_flag("--deterministic,!--no-deterministic", opts.deterministic,
               "Force deterministic execution (fixed reduction order)");
  app.add_option("--threads", opts.threads, "Worker thread cap")->capture_default_str();
  app.add_flag("--force", opts.force, "Reuse a non-empty output directory");
  auto* seed_opt =
      app.add_option("--seed", seed_flag, "Root seed override (splits hierarchically)");

  std::string out_dir;

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  std::string gen_config;
  gen->add_option("--config", gen_config, "Corpus config JSON")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* mk = app.add_subcommand("make-teachers", "Build teacher labels and codebook");
  voxlab::MakeTeachersArgs mk_args;
  std::string mk_corpus, mk_ckpt;
  mk->add_option("--corpus", mk_corpus, "Corpus directory")->required();
  mk->add_option("--mode", mk_args.mode,
                 "raw_frames | normalized_frames | model_layer")
      ->capture_default_str();
  mk->add_option("--k", mk_args.k, "Codebook size")->capture_default_str();
  mk->add_option("--beta", mk_args.beta,
                 "Conversion strength in [0,1]; below 1 leaves residual speaker "
                 "information in the teachers")
      ->capture_default_str();
  mk->add_option("--checkpoint", mk_ckpt, "Checkpoint for model_layer mode");
  mk->add_option("--layer", mk_args.layer, "Feature layer (-1 = best by PNMI)")
      ->capture_default_str();
  mk->add_option("--out", out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a variant");
  voxlab::TrainArgs tr_args;
  std::string tr_config, tr_corpus, tr_teachers, tr_resume;
  tr->add_option("--config", tr_config, "Train config JSON")->required();
  tr->add_option("--corpus", tr_corpus, "Corpus directory")->required();
  tr->add_option("--teachers", tr_teachers, "Teacher directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_option("--out", out_dir, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Run probes and metrics on a checkpoint");
  voxlab::EvalArgs ev_args;
  std::string ev_ckpt, ev_exp, ev_corpus;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file");
  ev->add_option("--experiment", ev_exp, "Experiment directory (uses best.bin)");
  ev->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  ev->add_option("--metrics", ev_args.metrics,
                 "Subset of: sid_curve phone_probe pnmi abx_within abx_cross "
                 "auto_bleu dtw_l0 (default: all)");
  ev->add_option("--layer", ev_args.layer, "Feature layer (-1 = encoder output)")
      ->capture_default_str();
  ev->add_option("--abx-triplets", ev_args.abx_triplets, "ABX triplet count")
      ->capture_default_str();
  ev->add_option("--out", out_dir, "Output directory")->required();

  auto* cp = app.add_subcommand("compare", "Join two eval reports side by side");
  std::string cp_a, cp_b;
  cp->add_option("--a", cp_a, "First eval output (directory or report.json)")->required();
  cp->add_option("--b", cp_b, "Second eval output")->required();
  cp->add_option("--out", out_dir, "Output directory")->required();

  auto* rp = app.add_subcommand("report", "Collate eval reports into one summary");
  std::vector<std::string> rp_inputs;
  rp->add_option("--experiments", rp_inputs, "Eval outputs to collate")->required();
  rp->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  seed_given = seed_opt->count() > 0;
  if (seed_given) opts.seed = seed_flag;

  try {
    if (gen->parsed()) {
      voxlab::cmd_gen_corpus(gen_config, out_dir, opts);
    } else if (mk->parsed()) {
      mk_args.corpus_dir = mk_corpus;
      if (!mk_ckpt.empty()) mk_args.checkpoint = mk_ckpt;
      voxlab::cmd_make_teachers(mk_args, out_dir, opts);
    } else if (tr->parsed()) {
      tr_args.config_path = tr_config;
      tr_args.corpus_dir = tr_corpus;
      tr_args.teacher_dir = tr_teachers;
      if (!tr_resume.empty()) tr_args.resume = tr_resume;
      voxlab::cmd_train(tr_args, out_dir, opts);
    } else if (ev->parsed()) {
      if (!ev_ckpt.empty()) ev_args.checkpoint = ev_ckpt;
      if (!ev_exp.empty()) ev_args.experiment = ev_exp;
      ev_args.corpus_dir = ev_corpus;
      voxlab::cmd_eval(ev_args, out_dir, opts);
    } else if (cp->parsed()) {
      voxlab::cmd_compare(cp_a, cp_b, out_dir, opts);
    } else if (rp->parsed()) {
      std::vector<std::filesystem::path> inputs(rp_inputs.begin(), rp_inputs.end());
      voxlab::cmd_report(inputs, out_dir, opts);
    }
  } catch (const voxlab::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const voxlab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
