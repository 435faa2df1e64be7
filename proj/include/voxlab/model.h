// voxlab/model.h

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

#ifndef VOXLAB_MODEL_H_
#define VOXLAB_MODEL_H_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "voxlab/common.h"
#include "voxlab/io.h"
#include "voxlab/rng.h"
#include "voxlab/tensor.h"

namespace voxlab {

// Representation network and predictor: a pre-norm self-attention stack over
// frame features (inputs come in as features already, so the front end is a
// single linear projection). Masked frames are swapped for a learned mask
// embedding before the stack. The predictor is a second stack whose layer
// norms are conditioned on a speaker embedding, followed by a projection and
// cosine logits against a class embedding table.

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kCosineEps = 1e-5;

struct ModelConfig {
  int num_encoder_layers = 6;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int predictor_layers = 3;
  double layer_drop_p = 0.05;  // encoder only; the predictor never drops
  int contrastive_layer = 0;   // 0 = default: round(0.58 * num_encoder_layers)
  double mask_prob = 0.065;
  int mask_span = 5;
  int num_classes = 100;
  int speaker_embed_dim = 16;
  double logit_temperature = 0.1;
  int final_proj_dim = 32;
  bool speaker_conditioning = true;

  int effective_contrastive_layer() const;
  void validate() const;
  static ModelConfig from_json(const JsonView& v);
  Json to_json() const;
};

struct MaskSpec {
  std::vector<uint8_t> masked;                    // per frame
  std::vector<std::pair<int32_t, int32_t>> spans;  // (start, length), sorted
};

// HuBERT-style span masking: every frame starts a span with probability
// mask_prob; spans have fixed length mask_span clipped at T; the union is
// taken. Boundary rules keep at least one masked and one unmasked frame:
// an empty draw is replaced by a single forced span, and a fully-masked draw
// sheds spans from the last start until an unmasked frame remains.
MaskSpec sample_mask(int64_t num_frames, double mask_prob, int mask_span, Rng& rng);

// One bernoulli(layer_drop_p) per encoder layer.
std::vector<uint8_t> sample_layer_drop(const ModelConfig& cfg, Rng& rng);

// The contrastive tap counts surviving layers from the top of the stack, so
// dropped layers above the nominal tap shift it downward. Returns an index
// into LayerOutputs::encoder (0 = post-mask input).
int effective_tap_layer(int nominal_tap, int num_encoder_layers,
                        std::span<const uint8_t> dropped);

template <class Real>
struct ParamBuf {
  std::string name;
  int64_t rows = 0;
  int64_t cols = 0;
  bool decay = false;  // weight decay applies only to 2-D weight matrices
  std::vector<Real> data;
};

template <class Real>
struct ModelParams {
  ModelConfig cfg;
  int input_dim = 0;
  int num_speakers = 0;
  std::vector<ParamBuf<Real>> bufs;
  std::unordered_map<std::string, int> index;

  int idx(const std::string& name) const;
  ParamBuf<Real>& buf(const std::string& name) { return bufs[static_cast<size_t>(idx(name))]; }
  const ParamBuf<Real>& buf(const std::string& name) const {
    return bufs[static_cast<size_t>(idx(name))];
  }
  int64_t num_params() const;
};

template <class Real>
ModelParams<Real> init_model_params(const ModelConfig& cfg, int input_dim,
                                    int num_speakers, uint64_t seed);

// Parameters registered as leaves of one tape, aligned with bufs.
template <class Real>
struct ParamLeaves {
  const ModelParams<Real>* params = nullptr;
  std::vector<Tensor<Real>> leaves;

  Tensor<Real> of(const std::string& name) const {
    return leaves[static_cast<size_t>(params->idx(name))];
  }
};

template <class Real>
ParamLeaves<Real> register_params(Tape<Real>& tape, const ModelParams<Real>& params,
                                  bool requires_grad = true);

template <class Real>
struct LayerOutputs {
  // encoder[0] is the post-masking input; encoder[l] is the output of layer l.
  std::vector<Tensor<Real>> encoder;
  std::vector<uint8_t> dropped;  // size num_encoder_layers
};

// drop_pattern may be empty (no layer drop) or one flag per encoder layer.
// mask may be null for unmasked (inference/probing) encoding.
template <class Real>
LayerOutputs<Real> encode(Tape<Real>& tape, const Mat<float>& frames,
                          const MaskSpec* mask, const ParamLeaves<Real>& p,
                          std::span<const uint8_t> drop_pattern);

template <class Real>
struct PredictorOutputs {
  std::vector<Tensor<Real>> layers;  // one per predictor layer
  Tensor<Real> logits;               // T x num_classes
};

// Speaker-conditioned prediction head. The embedding row is looked up from
// the speaker table (gradients flow into the table). With
// cfg.speaker_conditioning == false the conditional maps are ignored and the
// base scale/bias act as ordinary layer norm parameters.
template <class Real>
PredictorOutputs<Real> predict(Tape<Real>& tape, Tensor<Real> rep, int speaker_id,
                               const ParamLeaves<Real>& p);

// Probing variant: a fixed embedding vector (e.g. the table mean) instead of
// a table row.
template <class Real>
PredictorOutputs<Real> predict_with_embedding(Tape<Real>& tape, Tensor<Real> rep,
                                              std::span<const Real> embedding,
                                              const ParamLeaves<Real>& p);

// Mean row of the speaker table, the neutral probe embedding.
template <class Real>
std::vector<Real> neutral_speaker_embedding(const ModelParams<Real>& params);

// Checkpoints: JSON header (precision, config, step, rng state, teacher
// codebook id, buffer table) + raw little-endian parameter payload, plus
// optional named per-buffer extras (optimizer moments). Round-trips
// bit-exactly.
template <class Real>
struct Checkpoint {
  ModelParams<Real> params;
  int64_t step = 0;
  uint64_t root_seed = 0;
  std::string teacher_id;
  std::map<std::string, std::vector<std::vector<Real>>> extra;
};

template <class Real>
void save_checkpoint(const Checkpoint<Real>& ckpt, const std::filesystem::path& path);

template <class Real>
Checkpoint<Real> load_checkpoint_as(const std::filesystem::path& path);

using AnyCheckpoint = std::variant<Checkpoint<float>, Checkpoint<double>>;
AnyCheckpoint load_checkpoint(const std::filesystem::path& path);

const ModelConfig& checkpoint_config(const AnyCheckpoint& ckpt);
int64_t checkpoint_step(const AnyCheckpoint& ckpt);

}  // namespace voxlab

#endif  // VOXLAB_MODEL_H_
