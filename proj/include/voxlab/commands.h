// voxlab/commands.h

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

#ifndef VOXLAB_COMMANDS_H_
#define VOXLAB_COMMANDS_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxlab/io.h"

namespace voxlab {

// Implementation of the CLI subcommands, callable in-process (the binary in
// tools/ is a thin argument-parsing wrapper). Each command materializes its
// outputs plus a run_manifest.json under the resolved output directory and
// returns that directory.

struct GlobalOpts {
  std::optional<uint64_t> seed;  // overrides the config seed when set
  int threads = 1;
  bool deterministic = true;
  bool force = false;
  std::string command_line;  // recorded in the run manifest
};

std::filesystem::path cmd_gen_corpus(const std::filesystem::path& config_path,
                                     const std::filesystem::path& out,
                                     const GlobalOpts& opts);

struct MakeTeachersArgs {
  std::filesystem::path corpus_dir;
  std::string mode = "normalized_frames";
  int k = 100;
  double beta = 1.0;  // conversion strength; < 1 leaves residual speaker info
  std::optional<std::filesystem::path> checkpoint;  // model_layer mode
  int layer = -1;                                   // -1 = best layer by PNMI
  uint64_t seed = 1;
};
std::filesystem::path cmd_make_teachers(const MakeTeachersArgs& args,
                                        const std::filesystem::path& out,
                                        const GlobalOpts& opts);

struct TrainArgs {
  std::filesystem::path config_path;
  std::filesystem::path corpus_dir;
  std::filesystem::path teacher_dir;
  std::optional<std::filesystem::path> resume;
};
std::filesystem::path cmd_train(const TrainArgs& args, const std::filesystem::path& out,
                                const GlobalOpts& opts);

struct EvalArgs {
  std::optional<std::filesystem::path> checkpoint;   // direct checkpoint file
  std::optional<std::filesystem::path> experiment;   // uses checkpoints/best.bin
  std::filesystem::path corpus_dir;
  std::vector<std::string> metrics;  // empty = all
  int layer = -1;                    // feature layer; -1 = encoder output
  int abx_triplets = 500;
  uint64_t seed = 1;
};
std::filesystem::path cmd_eval(const EvalArgs& args, const std::filesystem::path& out,
                               const GlobalOpts& opts);

// Joins two eval reports side by side and emits relative changes (the SID
// reduction of A against B in percent, etc.).
std::filesystem::path cmd_compare(const std::filesystem::path& report_a,
                                  const std::filesystem::path& report_b,
                                  const std::filesystem::path& out,
                                  const GlobalOpts& opts);

// Collates any number of eval reports into one summary table (CSV + markdown).
std::filesystem::path cmd_report(const std::vector<std::filesystem::path>& reports,
                                 const std::filesystem::path& out,
                                 const GlobalOpts& opts);

// Valid metric names for cmd_eval.
const std::vector<std::string>& valid_metric_names();

}  // namespace voxlab

#endif  // VOXLAB_COMMANDS_H_
