// voxlab/teacher.h

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

#ifndef VOXLAB_TEACHER_H_
#define VOXLAB_TEACHER_H_

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voxlab/corpus.h"

namespace voxlab {

// Teacher-label pipeline: optionally convert every utterance to a reference
// voice, extract features (raw frames or a model layer), and quantize them
// with k-means into discrete per-frame labels.

struct KmeansOptions {
  int max_iters = 50;
  double tol = 1e-6;  // stop when the relative inertia change falls below
  uint64_t seed = 1;
};

struct Codebook {
  int K = 0;
  int dim = 0;
  Mat<double> centers;  // K x dim
  double inertia = 0.0;
  // Inertia measured at each assignment step; non-increasing by construction.
  std::vector<double> inertia_trace;
  int empty_reseeds = 0;
  Json source;  // provenance: feature source, beta, seed
};

// Lloyd's algorithm with k-means++ seeding. Requires N >= K. Empty clusters
// are reseeded from the point farthest from its assigned center.
Codebook kmeans_fit(const Mat<double>& features, int K, const KmeansOptions& opts);

// Nearest center per row; ties broken by the lowest center id.
std::vector<int32_t> kmeans_assign(const Mat<double>& features, const Codebook& cb);

// Re-renders an utterance with its voice factors moved toward the reference
// speaker. beta=1 replaces them outright (the clean analog of a voice
// converter); beta<1 interpolates in log space and leaves residual speaker
// information in the output. The conversion renders noiselessly. Tokens,
// durations, and frame labels are unchanged; the speaker id and group still
// name the original speaker.
Utterance normalize_speaker(const Utterance& u, const SpeakerParams& reference,
                            const PhoneInventory& inventory, double beta = 1.0);

// Deterministic reference: the training speaker closest to the population
// median in (log formant scale, F0 base).
const SpeakerParams& choose_reference_speaker(const Corpus& corpus);

enum class TeacherMode { kRawFrames, kNormalizedFrames, kModelLayer };

const char* teacher_mode_name(TeacherMode m);
TeacherMode teacher_mode_from_name(const std::string& name);

struct TeacherConfig {
  TeacherMode mode = TeacherMode::kNormalizedFrames;
  int K = 100;
  // Only used by kNormalizedFrames / kModelLayer. 1.0 = full conversion;
  // values below 1 emulate the residual speaker leakage of an imperfect
  // voice converter.
  double normalize_beta = 1.0;
  int model_layer = -1;  // kModelLayer: encoder layer; -1 = pick by PNMI
  uint64_t seed = 1;
  int64_t fit_subsample = 50000;  // cap on frames used to fit the codebook
};

struct TeacherSet {
  TeacherConfig config;
  Codebook codebook;
  std::vector<std::vector<int32_t>> labels;  // indexed by utterance id
  std::string id;                            // content digest, hex
};

// Per-utterance feature extractor used by kModelLayer mode; receives the
// (already normalized, when beta > 0) utterance.
using UtteranceFeatureFn = std::function<Mat<double>(const Utterance&)>;

// Fits the codebook on the train split (subsampled) and assigns labels to
// every utterance. feature_fn is required for kModelLayer mode and must not
// be set otherwise.
TeacherSet generate_teacher_labels(const Corpus& corpus, const TeacherConfig& config,
                                   const UtteranceFeatureFn& feature_fn = nullptr);

void save_teacher_set(const TeacherSet& ts, uint64_t corpus_digest,
                      const std::filesystem::path& dir);
TeacherSet load_teacher_set(const std::filesystem::path& dir,
                            std::optional<uint64_t> expect_corpus_digest);

void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace voxlab

#endif  // VOXLAB_TEACHER_H_
