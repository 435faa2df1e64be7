// voxlab/metrics.h

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

#ifndef VOXLAB_METRICS_H_
#define VOXLAB_METRICS_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxlab/corpus.h"
#include "voxlab/model.h"
#include "voxlab/teacher.h"

namespace voxlab {

// Probes and zero-resource metrics over frozen representations.

struct ProbeHyper {
  int iters = 300;
  double lr = 0.5;
  double l2 = 1e-4;
  int eval_every = 5;  // validation-snapshot cadence
};

struct ProbeResult {
  int layer = -1;     // 0..L encoder outputs, then L+1.. for predictor layers
  std::string stage;  // "encoder" | "predictor" | "input"
  std::string task;   // "sid" | "phone"
  double train_accuracy = 0;
  double valid_accuracy = 0;
  double test_accuracy = 0;
  int num_classes = 0;
  double chance = 0;
};

// L2-regularized multinomial logistic regression on standardized features,
// full-batch gradient descent, best-validation snapshot reported.
// split: 0 train, 1 valid, 2 test per row. Every test label must be seen in
// train.
ProbeResult linear_probe(const Mat<double>& features,
                         const std::vector<int32_t>& labels,
                         const std::vector<int>& split, int num_classes,
                         const ProbeHyper& hyper = {});

// A loaded checkpoint plus the forward machinery to read activations.
class ModelHandle {
 public:
  explicit ModelHandle(AnyCheckpoint ckpt);

  const ModelConfig& config() const;
  int input_dim() const;
  int64_t step() const;
  // Total probe layers: encoder 0..L plus predictor layers.
  int num_probe_layers() const;
  const char* stage_of(int layer) const;

  // Per-layer activations for one utterance: clean input (no mask, no layer
  // drop); predictor layers run under the neutral (table-mean) speaker
  // embedding so probes cannot read the injected label.
  std::vector<Mat<float>> layer_reps(const Utterance& u) const;

 private:
  AnyCheckpoint ckpt_;
};

// Per-layer speaker-identification probes on mean-pooled utterance features.
std::vector<ProbeResult> layerwise_sid_curve(const ModelHandle& model,
                                             const Corpus& corpus,
                                             const ProbeHyper& hyper = {});

// Per-frame phone probe at one layer (default: the encoder output).
// Train frames are subsampled to max_train_frames for tractability.
ProbeResult phone_probe(const ModelHandle& model, const Corpus& corpus, int layer,
                        const ProbeHyper& hyper = {},
                        int64_t max_train_frames = 20000, uint64_t seed = 1);

// SID probe on raw frame features (mean-pooled); the no-model baseline.
ProbeResult raw_frame_sid_probe(const Corpus& corpus, const ProbeHyper& hyper = {});
ProbeResult raw_frame_phone_probe(const Corpus& corpus, const ProbeHyper& hyper = {},
                                  int64_t max_train_frames = 20000, uint64_t seed = 1);

// Speaker probe on discrete label sequences via per-utterance normalized
// histogram features.
ProbeResult speaker_probe_on_labels(const std::vector<std::vector<int32_t>>& labels,
                                    const Corpus& corpus, int num_clusters,
                                    const ProbeHyper& hyper = {});

// I(phone; cluster) / H(phone), computed as (H(P) - H(P|C)) / H(P) and
// clamped to [0, 1]. Identical sequences give exactly 1.
double pnmi(std::span<const int32_t> cluster_labels,
            std::span<const int32_t> phone_labels);

// Fits a K-codebook per encoder layer (1..L) on train frames, reports the
// layer with the highest PNMI on the valid split; ties take the lower layer.
int best_layer_by_pnmi(const ModelHandle& model, const Corpus& corpus, int K,
                       uint64_t seed, int64_t fit_subsample = 10000);

// Same selection over externally supplied features: layer_features[l-1] holds
// per-utterance frame features of layer l (1-based layers).
int best_layer_by_pnmi_features(
    const Corpus& corpus, const std::vector<std::vector<Mat<float>>>& layer_features,
    int K, uint64_t seed, int64_t fit_subsample = 10000);

// K-means labels of one model layer over the whole corpus.
struct QuantizedLabels {
  Codebook codebook;
  std::vector<std::vector<int32_t>> labels;  // per utterance id
};
QuantizedLabels quantize_model_layer(const ModelHandle& model, const Corpus& corpus,
                                     int layer, int K, uint64_t seed,
                                     int64_t fit_subsample = 20000);

// Dynamic time warping with per-cell cost; returns total cost of the optimal
// monotone alignment divided by its length (among minimum-cost paths the
// shortest is used).
double dtw_average_cost(const Mat<double>& cost);

// DTW with per-frame angular distance arccos(cossim)/pi between rows.
double dtw_angular_distance(const Mat<double>& a, const Mat<double>& b);

struct AbxTriplet {
  Mat<double> a;  // same category as x
  Mat<double> b;  // different category
  Mat<double> x;
};

enum class AbxMode { kWithin, kCross };

// Fraction of triplets with d(x,a) < d(x,b); exact ties count 0.5.
double abx_score(std::span<const AbxTriplet> triplets);

// Build triplets from ground-truth phone spans of the test split over the
// given per-utterance features (aligned with corpus.utterances). Within-mode
// triplets share one speaker; cross-mode draws x from a different speaker.
std::vector<AbxTriplet> build_abx_tasks(const Corpus& corpus,
                                        const std::vector<Mat<double>>& features,
                                        AbxMode mode, int num_triplets, uint64_t seed);

// Cluster-id ranks ordered by each cluster's group-B occurrence ratio; ties
// (including unused clusters, ratio 0) break by cluster id. The result is a
// permutation of 0..K-1.
std::vector<int32_t> rank_labels_by_group(const std::vector<std::vector<int32_t>>& labels,
                                          const Corpus& corpus, int num_clusters);

// Average rank-mismatch rate after DTW alignment of two ranked label
// sequences (per-step cost 1{rank_a != rank_b}).
double dtw_l0(std::span<const int32_t> seq_a, std::span<const int32_t> seq_b,
              std::span<const int32_t> rank_map);

// Mean DTW-L0 over same-content cross-group utterance pairs of a split.
double mean_cross_group_dtw_l0(const Corpus& corpus,
                               const std::vector<std::vector<int32_t>>& labels,
                               std::span<const int32_t> rank_map, Split split,
                               int max_pairs, uint64_t seed);

// Fraction of k-grams that occur at least twice in the sequence.
double auto_bleu(std::span<const int32_t> seq, int k);

}  // namespace voxlab

#endif  // VOXLAB_METRICS_H_
