// voxlab/corpus.h

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

#ifndef VOXLAB_CORPUS_H_
#define VOXLAB_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxlab/common.h"
#include "voxlab/io.h"
#include "voxlab/rng.h"

namespace voxlab {

// The synthetic speech world. Utterances are frame sequences rendered from a
// content token sequence and explicit voice factors (formant scale, F0 base,
// EQ curve), so every probe has ground truth to check against. Frames are
// sums of Gaussian bumps on a [0,1) frequency axis: one bump per formant of
// the current phone (centers scaled by the speaker's formant scale), plus a
// pitch bump at the F0 base, all shaped bin-wise by the EQ curve, plus
// i.i.d. Gaussian noise.

// Axis constants. Formant positions live in [kFormantLo, kFormantHi] with at
// least kFormantSep between formants of one phone; the band is chosen so that
// positions stay inside (0,1) under the worst-case combined scale 1.4 * 1.4
// of speaker factor times perturbation factor.
inline constexpr double kFormantLo = 0.10;
inline constexpr double kFormantHi = 0.50;
inline constexpr double kFormantSep = 0.06;
inline constexpr double kPhoneMinDist = 0.012;  // L-inf between phone prototypes
inline constexpr double kFormantBumpWidth = 0.03;
inline constexpr double kPitchBumpWidth = 0.02;
inline constexpr double kPitchAmp = 1.0;
inline constexpr double kMaxVoiceScale = 1.4;  // both speaker and transform side
// Group-disjoint F0 bands.
inline constexpr double kGroupAF0Lo = 0.04;
inline constexpr double kGroupAF0Hi = 0.10;
inline constexpr double kGroupBF0Lo = 0.14;
inline constexpr double kGroupBF0Hi = 0.24;
inline constexpr double kEqGainLo = 0.5;
inline constexpr double kEqGainHi = 2.0;

struct CorpusConfig {
  int num_phones = 30;
  int feat_dim = 40;
  int num_speakers = 24;  // half group A, half group B
  int utterances_per_speaker = 40;
  int min_dur = 2;  // frames per token
  int max_dur = 5;
  double noise_std = 0.05;
  uint64_t rng_seed = 1;
  // Content structure: utterances draw their token sequence from a shared
  // pool so that the same content is produced by many speakers (needed for
  // cross-group aligned-pair analyses); a reserved slice of the pool only
  // appears in the test split.
  int tokens_per_utterance = 12;
  int valid_per_speaker = 4;
  int test_per_speaker = 6;
  int content_pool_size = 60;
  int held_out_content = 12;

  void validate() const;
  static CorpusConfig from_json(const JsonView& v);
  Json to_json() const;
};

struct Phone {
  std::vector<double> positions;  // strictly increasing, in (0,1)
  std::vector<double> amps;
};

struct PhoneInventory {
  std::vector<Phone> phones;
};

enum class SpeakerGroup : uint8_t { kA = 0, kB = 1 };

inline const char* group_name(SpeakerGroup g) {
  return g == SpeakerGroup::kA ? "A" : "B";
}

struct SpeakerParams {
  int speaker_id = -1;
  SpeakerGroup group = SpeakerGroup::kA;
  double formant_scale = 1.0;  // in [1/1.4, 1.4]
  double f0_base = 0.1;        // fraction of the frequency axis
  std::vector<double> eq_curve;  // per-bin gains in [0.5, 2.0]
};

enum class Split : int { kTrain = 0, kValid = 1, kTest = 2 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct Utterance {
  int id = -1;
  int content_id = -1;
  Split split = Split::kTrain;
  std::vector<int32_t> tokens;     // phone ids
  std::vector<int32_t> durations;  // frames per token, aligned with tokens
  std::vector<int32_t> phone_labels;  // per frame, length T
  SpeakerParams speaker;
  Mat<float> frames;  // T x feat_dim

  int64_t num_frames() const { return frames.rows; }
};

struct Corpus {
  CorpusConfig config;
  PhoneInventory inventory;
  std::vector<SpeakerParams> speakers;
  std::vector<std::vector<int32_t>> content_pool;
  std::vector<Utterance> utterances;
  uint64_t digest = 0;

  std::vector<int> utterance_ids(Split split) const;
  const SpeakerParams& speaker(int id) const;
};

// Smooth random per-bin gains: exp of a low-order cosine mixture, clipped to
// [kEqGainLo, kEqGainHi].
std::vector<double> sample_eq_curve(int feat_dim, Rng& rng);

// num_phones distinct prototypes with margin for every legal voice scale.
PhoneInventory build_inventory(const CorpusConfig& config, Rng& rng);

SpeakerParams sample_speaker(const CorpusConfig& config, Rng& rng,
                             SpeakerGroup group, int speaker_id);

// Expands tokens+durations to per-frame phone labels.
std::vector<int32_t> frame_labels(std::span<const int32_t> tokens,
                                  std::span<const int32_t> durations);

// Renders frames for a token sequence under the given voice factors. Noise
// is drawn from `rng` when noise_std > 0.
Mat<float> render_frames(std::span<const int32_t> tokens,
                         std::span<const int32_t> durations,
                         const PhoneInventory& inventory, int feat_dim,
                         double formant_scale, double f0_base,
                         std::span<const double> eq_curve, double noise_std,
                         Rng* rng);

Corpus build_corpus(const CorpusConfig& config);

uint64_t corpus_digest(const Corpus& corpus);

// Directory layout: manifest.json plus frames.bin (row-major f32).
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace voxlab

#endif  // VOXLAB_CORPUS_H_
