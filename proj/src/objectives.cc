// voxlab/objectives.cc

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

#include "voxlab/objectives.h"

#include <algorithm>

namespace voxlab {

void ContrastiveConfig::validate() const {
  VOXLAB_REQUIRE(temperature > 0.0, ConfigError,
                 "contrastive.temperature: must be > 0");
  VOXLAB_REQUIRE(num_negatives >= 1, ConfigError,
                 "contrastive.num_negatives: must be >= 1");
  VOXLAB_REQUIRE(tap_layer >= 0, ConfigError,
                 "contrastive.tap_layer: must be >= 0 (0 selects the default)");
}

ContrastiveConfig ContrastiveConfig::from_json(const JsonView& v) {
  ContrastiveConfig c;
  c.temperature = v.get_double("temperature", c.temperature);
  c.num_negatives = static_cast<int>(v.get_int("num_negatives", c.num_negatives));
  c.tap_layer = static_cast<int>(v.get_int("tap_layer", c.tap_layer));
  c.apply_to_all_frames = v.get_bool("apply_to_all_frames", c.apply_to_all_frames);
  c.validate();
  return c;
}

Json ContrastiveConfig::to_json() const {
  Json j;
  j["temperature"] = temperature;
  j["num_negatives"] = num_negatives;
  j["tap_layer"] = tap_layer;
  j["apply_to_all_frames"] = apply_to_all_frames;
  return j;
}

double LambdaSchedule::operator()(int64_t step) const {
  VOXLAB_REQUIRE(step >= 0, ContractError, "lambda schedule: negative step");
  VOXLAB_REQUIRE(total_steps >= 1, ContractError, "lambda schedule: total_steps < 1");
  const double frac =
      std::min(static_cast<double>(step) / static_cast<double>(total_steps), 1.0);
  return lambda_max * frac;
}

std::vector<int32_t> sample_negatives(int64_t num_frames, int64_t t,
                                      int num_negatives, Rng& rng) {
  VOXLAB_REQUIRE(num_frames >= 2, ContractError,
                 "sample_negatives: need at least two frames");
  VOXLAB_REQUIRE(t >= 0 && t < num_frames, IndexError,
                 "sample_negatives: anchor " << t << " out of range");
  const int count =
      std::min<int64_t>(num_negatives, num_frames - 1);  // reduced when T is short
  return rng.sample_without_replacement(static_cast<int32_t>(num_frames), count,
                                        static_cast<int32_t>(t));
}

std::vector<std::vector<int32_t>> sample_negatives_all(int64_t num_frames,
                                                       int num_negatives, Rng& rng) {
  std::vector<std::vector<int32_t>> out(static_cast<size_t>(num_frames));
  for (int64_t t = 0; t < num_frames; ++t)
    out[static_cast<size_t>(t)] = sample_negatives(num_frames, t, num_negatives, rng);
  return out;
}

template <class Real>
Tensor<Real> masked_prediction_loss(Tape<Real>& tape,
                                    std::span<const ViewLogits<Real>> views,
                                    std::span<const int32_t> teacher_labels) {
  VOXLAB_REQUIRE(!views.empty(), ContractError, "masked_prediction_loss: no views");
  Tensor<Real> acc;
  for (const auto& view : views) {
    VOXLAB_REQUIRE(view.mask != nullptr, ContractError,
                   "masked_prediction_loss: view without a mask");
    VOXLAB_REQUIRE(view.logits.rows() == static_cast<int64_t>(teacher_labels.size()),
                   DimensionError,
                   "masked_prediction_loss: " << teacher_labels.size()
                                              << " labels for " << view.logits.rows()
                                              << " frames");
    auto ce = tape.cross_entropy_logits(view.logits, teacher_labels, view.mask->masked);
    acc = acc.valid() ? tape.add(acc, ce) : ce;
  }
  return tape.scale(acc, static_cast<Real>(1.0 / static_cast<double>(views.size())));
}

template <class Real>
Tensor<Real> contrastive_loss(Tape<Real>& tape, Tensor<Real> rep1, Tensor<Real> rep2,
                              const std::vector<std::vector<int32_t>>& negatives,
                              double temperature, ContrastiveForm form) {
  VOXLAB_REQUIRE(temperature > 0.0, ContractError, "contrastive_loss: temperature <= 0");
  VOXLAB_REQUIRE(rep1.rows() == rep2.rows() && rep1.cols() == rep2.cols(),
                 DimensionError, "contrastive_loss: view shapes differ");
  const int64_t T = rep1.rows();
  VOXLAB_REQUIRE(static_cast<int64_t>(negatives.size()) == T, DimensionError,
                 "contrastive_loss: negative sets do not cover every frame");
  const size_t n_neg = negatives.empty() ? 0 : negatives.front().size();
  VOXLAB_REQUIRE(n_neg >= 1, ContractError, "contrastive_loss: empty negative sets");
  std::vector<int32_t> anchor_rows, neg_rows, diag;
  anchor_rows.reserve(static_cast<size_t>(T) * n_neg);
  neg_rows.reserve(static_cast<size_t>(T) * n_neg);
  diag.reserve(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) {
    const auto& negs = negatives[static_cast<size_t>(t)];
    VOXLAB_REQUIRE(negs.size() == n_neg, ContractError,
                   "contrastive_loss: ragged negative sets");
    for (const int32_t tau : negs) {
      VOXLAB_REQUIRE(tau >= 0 && tau < T, IndexError,
                     "contrastive_loss: negative index " << tau << " out of range");
      VOXLAB_REQUIRE(tau != t, ContractError,
                     "contrastive_loss: anchor " << t << " appears in its negatives");
      anchor_rows.push_back(static_cast<int32_t>(t));
      neg_rows.push_back(tau);
    }
    diag.push_back(static_cast<int32_t>(t));
  }

  const Real inv_k = static_cast<Real>(1.0 / temperature);
  auto n1 = tape.rows_l2_normalize(rep1, static_cast<Real>(kCosineEps));
  auto n2 = tape.rows_l2_normalize(rep2, static_cast<Real>(kCosineEps));
  auto cross = tape.matmul_nt(n1, n2);  // cross(t, u) = cossim(r1_t, r2_u)
  auto pos = tape.gather_elems(cross, diag, diag, T, 1);

  auto direction = [&](Tensor<Real> same_view_sims) -> Tensor<Real> {
    auto negs = tape.gather_elems(same_view_sims, anchor_rows, neg_rows, T,
                                  static_cast<int64_t>(n_neg));
    if (form == ContrastiveForm::kNtXent) {
      std::vector<Tensor<Real>> parts{pos, negs};
      auto logits = tape.scale(tape.concat_cols(parts), inv_k);
      const std::vector<int32_t> targets(static_cast<size_t>(T), 0);
      const std::vector<uint8_t> all(static_cast<size_t>(T), 1);
      return tape.cross_entropy_logits(logits, targets, all);
    }
    // Literal printed form: the self-similarity joins the denominator and no
    // log is taken; summed, not averaged.
    auto self_sims = tape.gather_elems(same_view_sims, diag, diag, T, 1);
    std::vector<Tensor<Real>> parts{self_sims, negs};
    auto denom = tape.row_sum(tape.exp(tape.scale(tape.concat_cols(parts), inv_k)));
    auto ratio = tape.div(tape.exp(tape.scale(pos, inv_k)), denom);
    return tape.sum_all(ratio);
  };

  auto sims1 = tape.matmul_nt(n1, n1);
  auto sims2 = tape.matmul_nt(n2, n2);
  auto loss1 = direction(sims1);
  auto loss2 = direction(sims2);
  if (form == ContrastiveForm::kNtXent) {
    return tape.scale(tape.add(loss1, loss2), static_cast<Real>(0.5));
  }
  return tape.add(loss1, loss2);
}

template <class Real>
Tensor<Real> combined_loss(Tape<Real>& tape, Tensor<Real> pred_loss,
                           Tensor<Real> contr_loss, int64_t step,
                           const LambdaSchedule& schedule) {
  const double lambda = schedule(step);
  if (!contr_loss.valid() || lambda == 0.0) return pred_loss;
  return tape.add(pred_loss, tape.scale(contr_loss, static_cast<Real>(lambda)));
}

template Tensor<float> masked_prediction_loss<float>(Tape<float>&,
                                                     std::span<const ViewLogits<float>>,
                                                     std::span<const int32_t>);
template Tensor<double> masked_prediction_loss<double>(
    Tape<double>&, std::span<const ViewLogits<double>>, std::span<const int32_t>);
template Tensor<float> contrastive_loss<float>(Tape<float>&, Tensor<float>,
                                               Tensor<float>,
                                               const std::vector<std::vector<int32_t>>&,
                                               double, ContrastiveForm);
template Tensor<double> contrastive_loss<double>(
    Tape<double>&, Tensor<double>, Tensor<double>,
    const std::vector<std::vector<int32_t>>&, double, ContrastiveForm);
template Tensor<float> combined_loss<float>(Tape<float>&, Tensor<float>, Tensor<float>,
                                            int64_t, const LambdaSchedule&);
template Tensor<double> combined_loss<double>(Tape<double>&, Tensor<double>,
                                              Tensor<double>, int64_t,
                                              const LambdaSchedule&);

}  // namespace voxlab
