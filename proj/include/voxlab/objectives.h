// voxlab/objectives.h

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

#ifndef VOXLAB_OBJECTIVES_H_
#define VOXLAB_OBJECTIVES_H_

#include <cstdint>
#include <span>
#include <vector>

#include "voxlab/io.h"
#include "voxlab/model.h"
#include "voxlab/rng.h"
#include "voxlab/tensor.h"

namespace voxlab {

struct ContrastiveConfig {
  double temperature = 0.1;
  int num_negatives = 20;
  int tap_layer = 0;  // 0 = model config default
  bool apply_to_all_frames = true;

  void validate() const;
  static ContrastiveConfig from_json(const JsonView& v);
  Json to_json() const;
};

// lambda(step) = lambda_max * min(step / total_steps, 1); non-decreasing.
struct LambdaSchedule {
  double lambda_max = 10.0;
  int64_t total_steps = 1;

  double operator()(int64_t step) const;
};

// Negative time indices for anchor t: uniform without replacement from
// {0..T-1} \ {t}. When T-1 < num_negatives the count is reduced to T-1 (the
// caller sees the shorter list).
std::vector<int32_t> sample_negatives(int64_t num_frames, int64_t t,
                                      int num_negatives, Rng& rng);
std::vector<std::vector<int32_t>> sample_negatives_all(int64_t num_frames,
                                                       int num_negatives, Rng& rng);

template <class Real>
struct ViewLogits {
  Tensor<Real> logits;      // T x K
  const MaskSpec* mask = nullptr;
};

// Mean over masked frames of the teacher cross-entropy, averaged over views
// (each view carries its own mask).
template <class Real>
Tensor<Real> masked_prediction_loss(Tape<Real>& tape,
                                    std::span<const ViewLogits<Real>> views,
                                    std::span<const int32_t> teacher_labels);

enum class ContrastiveForm {
  // Symmetric normalized-temperature cross-entropy: per anchor and direction,
  // -log( exp(pos/k) / (exp(pos/k) + sum_neg exp(neg/k)) ), negatives drawn
  // from the anchor's own view; mean over frames and both directions.
  kNtXent,
  // The same ratio without the -log and with the self-similarity term in the
  // denominator, summed over frames and directions. Kept for comparison
  // only; minimizing it directly would repel positives.
  kLiteralRatio,
};

template <class Real>
Tensor<Real> contrastive_loss(Tape<Real>& tape, Tensor<Real> rep1, Tensor<Real> rep2,
                              const std::vector<std::vector<int32_t>>& negatives,
                              double temperature,
                              ContrastiveForm form = ContrastiveForm::kNtXent);

// prediction + lambda(step) * contrastive.
template <class Real>
Tensor<Real> combined_loss(Tape<Real>& tape, Tensor<Real> pred_loss,
                           Tensor<Real> contr_loss, int64_t step,
                           const LambdaSchedule& schedule);

}  // namespace voxlab

#endif  // VOXLAB_OBJECTIVES_H_
