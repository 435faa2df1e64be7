// voxlab/trainer.h

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

#ifndef VOXLAB_TRAINER_H_
#define VOXLAB_TRAINER_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxlab/corpus.h"
#include "voxlab/model.h"
#include "voxlab/objectives.h"
#include "voxlab/perturb.h"
#include "voxlab/teacher.h"

namespace voxlab {

struct OptimizerConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double warmup_frac = 0.05;  // fraction of total steps with linear warmup

  static OptimizerConfig from_json(const JsonView& v);
  Json to_json() const;
};

template <class Real>
struct AdamState {
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
  int64_t t = 0;

  static AdamState<Real> init(const ModelParams<Real>& params);
};

// Adaptive-moment update with bias correction and decoupled weight decay
// (decay only where the buffer's decay flag is set). lr is the already
// warmed-up step size. Throws NumericError on non-finite gradients.
template <class Real>
void optimizer_step(ModelParams<Real>& params,
                    const std::vector<std::vector<Real>>& grads,
                    AdamState<Real>& state, const OptimizerConfig& hyper, double lr);

double warmup_lr(const OptimizerConfig& hyper, int64_t step, int64_t total_steps);

enum class TrainVariant { kContentVec, kHubertIter, kNoDt, kNoDs, kNoCond };

const char* variant_name(TrainVariant v);
// Throws ConfigError listing the valid names on unknown input.
TrainVariant variant_from_name(const std::string& name);

struct VariantTraits {
  bool dual_views = true;        // two perturbed views per utterance
  bool use_contrastive = true;   // contrastive term at the tap layer
  bool conditioning = true;      // speaker-conditioned predictor
  bool normalized_teachers = true;  // expected teacher disentanglement
};
VariantTraits variant_traits(TrainVariant v);

struct TrainConfig {
  TrainVariant variant = TrainVariant::kContentVec;
  int64_t total_steps = 3000;
  int batch_size = 8;
  OptimizerConfig optimizer;
  uint64_t seed = 1;
  int64_t eval_every = 100;
  int64_t checkpoint_every = 500;
  ModelConfig model;
  ContrastiveConfig contrastive;
  double lambda_max = 10.0;
  std::string precision = "f32";  // f32 | f64
  bool deterministic = true;
  int threads = 1;

  void validate() const;
  static TrainConfig from_json(const JsonView& v);
  Json to_json() const;
};

struct LossRow {
  int64_t step = 0;
  double pred_loss = 0;
  std::optional<double> contr_loss;
  double lambda = 0;
  double combined = 0;
  std::optional<int> tap_layer;
};

struct ValRow {
  int64_t step = 0;
  double pred = 0;
  std::optional<double> contr;
  double combined = 0;
};

struct ExperimentRecord {
  TrainConfig config;
  std::string teacher_id;
  int views_per_step = 2;
  std::vector<LossRow> losses;
  std::vector<ValRow> val;
  int64_t best_step = -1;
  double best_val_pred = 0;
  std::vector<std::pair<int64_t, std::string>> checkpoint_files;
  std::optional<AnyCheckpoint> final_checkpoint;
  std::optional<AnyCheckpoint> best_checkpoint;
};

std::string losses_csv(const ExperimentRecord& record);
std::string val_csv(const ExperimentRecord& record);

// One assembled training example: the (possibly perturbed) views plus their
// masks and shared negative sets. Exposed so variant behavior is testable.
struct BatchItem {
  int utt_id = -1;
  Mat<float> view1;
  Mat<float> view2;  // empty for single-view variants
  MaskSpec mask1;
  MaskSpec mask2;
  std::vector<std::vector<int32_t>> negatives;
};

std::vector<BatchItem> assemble_batch(const Corpus& corpus, const TrainConfig& config,
                                      int64_t step);

// Runs the whole loop. When out_dir is set, losses.csv / valid.csv /
// checkpoints/ are written there. resume_from continues bit-exactly from a
// saved checkpoint of the same config and seed.
ExperimentRecord train(const TrainConfig& config, const Corpus& corpus,
                       const TeacherSet& teachers,
                       const std::optional<std::filesystem::path>& out_dir = {},
                       const std::optional<std::filesystem::path>& resume_from = {});

}  // namespace voxlab

#endif  // VOXLAB_TRAINER_H_
