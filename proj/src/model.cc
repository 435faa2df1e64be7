// voxlab/model.cc

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

#include "voxlab/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace voxlab {

namespace fs = std::filesystem;

int ModelConfig::effective_contrastive_layer() const {
  if (contrastive_layer > 0) return contrastive_layer;
  const int derived =
      static_cast<int>(std::lround(0.58 * static_cast<double>(num_encoder_layers)));
  return std::clamp(derived, 1, num_encoder_layers);
}

void ModelConfig::validate() const {
  VOXLAB_REQUIRE(num_encoder_layers >= 1, ConfigError,
                 "model.num_encoder_layers: must be >= 1");
  VOXLAB_REQUIRE(model_dim >= 2 && model_dim % num_heads == 0, ConfigError,
                 "model.model_dim: must be a positive multiple of num_heads");
  VOXLAB_REQUIRE(num_heads >= 1, ConfigError, "model.num_heads: must be >= 1");
  VOXLAB_REQUIRE(ffn_dim >= 2, ConfigError, "model.ffn_dim: must be >= 2");
  VOXLAB_REQUIRE(predictor_layers >= 1, ConfigError,
                 "model.predictor_layers: must be >= 1");
  VOXLAB_REQUIRE(layer_drop_p >= 0.0 && layer_drop_p <= 1.0, ConfigError,
                 "model.layer_drop_p: must be in [0,1]");
  const int tap = effective_contrastive_layer();
  VOXLAB_REQUIRE(tap >= 1 && tap <= num_encoder_layers, ConfigError,
                 "model.contrastive_layer: must be in [1, num_encoder_layers], got "
                     << tap);
  VOXLAB_REQUIRE(mask_prob >= 0.0 && mask_prob <= 1.0, ConfigError,
                 "model.mask_prob: must be in [0,1]");
  VOXLAB_REQUIRE(mask_span >= 1, ConfigError, "model.mask_span: must be >= 1");
  VOXLAB_REQUIRE(num_classes >= 2, ConfigError, "model.num_classes: must be >= 2");
  VOXLAB_REQUIRE(speaker_embed_dim >= 1, ConfigError,
                 "model.speaker_embed_dim: must be >= 1");
  VOXLAB_REQUIRE(logit_temperature > 0.0, ConfigError,
                 "model.logit_temperature: must be > 0");
  VOXLAB_REQUIRE(final_proj_dim >= 2, ConfigError, "model.final_proj_dim: must be >= 2");
}

ModelConfig ModelConfig::from_json(const JsonView& v) {
  ModelConfig c;
  c.num_encoder_layers =
      static_cast<int>(v.get_int("num_encoder_layers", c.num_encoder_layers));
  c.model_dim = static_cast<int>(v.get_int("model_dim", c.model_dim));
  c.num_heads = static_cast<int>(v.get_int("num_heads", c.num_heads));
  c.ffn_dim = static_cast<int>(v.get_int("ffn_dim", c.ffn_dim));
  c.predictor_layers =
      static_cast<int>(v.get_int("predictor_layers", c.predictor_layers));
  c.layer_drop_p = v.get_double("layer_drop_p", c.layer_drop_p);
  c.contrastive_layer =
      static_cast<int>(v.get_int("contrastive_layer", c.contrastive_layer));
  c.mask_prob = v.get_double("mask_prob", c.mask_prob);
  c.mask_span = static_cast<int>(v.get_int("mask_span", c.mask_span));
  c.num_classes = static_cast<int>(v.get_int("num_classes", c.num_classes));
  c.speaker_embed_dim =
      static_cast<int>(v.get_int("speaker_embed_dim", c.speaker_embed_dim));
  c.logit_temperature = v.get_double("logit_temperature", c.logit_temperature);
  c.final_proj_dim = static_cast<int>(v.get_int("final_proj_dim", c.final_proj_dim));
  c.speaker_conditioning = v.get_bool("speaker_conditioning", c.speaker_conditioning);
  c.validate();
  return c;
}

Json ModelConfig::to_json() const {
  Json j;
  j["num_encoder_layers"] = num_encoder_layers;
  j["model_dim"] = model_dim;
  j["num_heads"] = num_heads;
  j["ffn_dim"] = ffn_dim;
  j["predictor_layers"] = predictor_layers;
  j["layer_drop_p"] = layer_drop_p;
  j["contrastive_layer"] = contrastive_layer;
  j["mask_prob"] = mask_prob;
  j["mask_span"] = mask_span;
  j["num_classes"] = num_classes;
  j["speaker_embed_dim"] = speaker_embed_dim;
  j["logit_temperature"] = logit_temperature;
  j["final_proj_dim"] = final_proj_dim;
  j["speaker_conditioning"] = speaker_conditioning;
  return j;
}

MaskSpec sample_mask(int64_t num_frames, double mask_prob, int mask_span, Rng& rng) {
  VOXLAB_REQUIRE(num_frames > mask_span, ContractError,
                 "sample_mask: need num_frames > mask_span, got " << num_frames
                                                                  << " <= " << mask_span);
  std::vector<int32_t> starts;
  for (int64_t t = 0; t < num_frames; ++t) {
    if (rng.bernoulli(mask_prob)) starts.push_back(static_cast<int32_t>(t));
  }
  if (starts.empty()) {
    // Forced single span so at least one frame is masked.
    starts.push_back(static_cast<int32_t>(rng.uniform_int(num_frames - mask_span + 1)));
  }
  auto build = [&](const std::vector<int32_t>& ss) {
    MaskSpec m;
    m.masked.assign(static_cast<size_t>(num_frames), 0);
    for (const int32_t s : ss) {
      const int32_t len =
          static_cast<int32_t>(std::min<int64_t>(mask_span, num_frames - s));
      m.spans.emplace_back(s, len);
      for (int32_t k = 0; k < len; ++k) m.masked[static_cast<size_t>(s + k)] = 1;
    }
    return m;
  };
  MaskSpec m = build(starts);
  // Shed spans from the last start until an unmasked frame exists.
  while (std::all_of(m.masked.begin(), m.masked.end(), [](uint8_t b) { return b != 0; })) {
    starts.pop_back();
    m = build(starts);
  }
  return m;
}

std::vector<uint8_t> sample_layer_drop(const ModelConfig& cfg, Rng& rng) {
  std::vector<uint8_t> drop(static_cast<size_t>(cfg.num_encoder_layers), 0);
  if (cfg.layer_drop_p <= 0.0) return drop;
  for (auto& d : drop) d = rng.bernoulli(cfg.layer_drop_p) ? 1 : 0;
  return drop;
}

int effective_tap_layer(int nominal_tap, int num_encoder_layers,
                        std::span<const uint8_t> dropped) {
  VOXLAB_REQUIRE(nominal_tap >= 1 && nominal_tap <= num_encoder_layers, ContractError,
                 "effective_tap_layer: nominal tap out of range");
  if (dropped.empty()) return nominal_tap;
  VOXLAB_REQUIRE(static_cast<int>(dropped.size()) == num_encoder_layers, ContractError,
                 "effective_tap_layer: drop pattern size mismatch");
  const int above = num_encoder_layers - nominal_tap;
  // Walk down from the top, skipping dropped layers, until `above` surviving
  // layers sit above the tap.
  int seen_above = 0;
  for (int l = num_encoder_layers; l >= 1; --l) {
    if (dropped[static_cast<size_t>(l - 1)]) continue;
    if (seen_above == above) return l;
    ++seen_above;
  }
  return 0;  // everything below was dropped; tap falls back to the input
}

namespace {

template <class Real>
void add_buf(ModelParams<Real>& p, const std::string& name, int64_t rows,
             int64_t cols, bool decay) {
  ParamBuf<Real> b;
  b.name = name;
  b.rows = rows;
  b.cols = cols;
  b.decay = decay;
  b.data.assign(static_cast<size_t>(rows * cols), Real(0));
  p.index[name] = static_cast<int>(p.bufs.size());
  p.bufs.push_back(std::move(b));
}

template <class Real>
void add_layer_bufs(ModelParams<Real>& p, const std::string& prefix, int model_dim,
                    int ffn_dim, bool conditional, int embed_dim) {
  if (conditional) {
    add_buf(p, prefix + "cln1_ws", embed_dim, model_dim, true);
    add_buf(p, prefix + "cln1_bs", 1, model_dim, false);
    add_buf(p, prefix + "cln1_wb", embed_dim, model_dim, true);
    add_buf(p, prefix + "cln1_bb", 1, model_dim, false);
  } else {
    add_buf(p, prefix + "ln1_s", 1, model_dim, false);
    add_buf(p, prefix + "ln1_b", 1, model_dim, false);
  }
  add_buf(p, prefix + "wq", model_dim, model_dim, true);
  add_buf(p, prefix + "bq", 1, model_dim, false);
  add_buf(p, prefix + "wk", model_dim, model_dim, true);
  add_buf(p, prefix + "bk", 1, model_dim, false);
  add_buf(p, prefix + "wv", model_dim, model_dim, true);
  add_buf(p, prefix + "bv", 1, model_dim, false);
  add_buf(p, prefix + "wo", model_dim, model_dim, true);
  add_buf(p, prefix + "bo", 1, model_dim, false);
  if (conditional) {
    add_buf(p, prefix + "cln2_ws", embed_dim, model_dim, true);
    add_buf(p, prefix + "cln2_bs", 1, model_dim, false);
    add_buf(p, prefix + "cln2_wb", embed_dim, model_dim, true);
    add_buf(p, prefix + "cln2_bb", 1, model_dim, false);
  } else {
    add_buf(p, prefix + "ln2_s", 1, model_dim, false);
    add_buf(p, prefix + "ln2_b", 1, model_dim, false);
  }
  add_buf(p, prefix + "w1", model_dim, ffn_dim, true);
  add_buf(p, prefix + "b1", 1, ffn_dim, false);
  add_buf(p, prefix + "w2", ffn_dim, model_dim, true);
  add_buf(p, prefix + "b2", 1, model_dim, false);
}

}  // namespace

template <class Real>
int ModelParams<Real>::idx(const std::string& name) const {
  const auto it = index.find(name);
  VOXLAB_REQUIRE(it != index.end(), ContractError, "unknown parameter " << name);
  return it->second;
}

template <class Real>
int64_t ModelParams<Real>::num_params() const {
  int64_t n = 0;
  for (const auto& b : bufs) n += b.rows * b.cols;
  return n;
}

template <class Real>
ModelParams<Real> init_model_params(const ModelConfig& cfg, int input_dim,
                                    int num_speakers, uint64_t seed) {
  cfg.validate();
  VOXLAB_REQUIRE(input_dim >= 1, ConfigError, "init_model_params: bad input_dim");
  VOXLAB_REQUIRE(num_speakers >= 1, ConfigError, "init_model_params: bad num_speakers");
  ModelParams<Real> p;
  p.cfg = cfg;
  p.input_dim = input_dim;
  p.num_speakers = num_speakers;

  add_buf(p, "in_proj_w", input_dim, cfg.model_dim, true);
  add_buf(p, "in_proj_b", 1, cfg.model_dim, false);
  add_buf(p, "mask_emb", 1, cfg.model_dim, false);
  for (int l = 1; l <= cfg.num_encoder_layers; ++l) {
    add_layer_bufs(p, "enc" + std::to_string(l) + ".", cfg.model_dim, cfg.ffn_dim,
                   /*conditional=*/false, cfg.speaker_embed_dim);
  }
  for (int l = 1; l <= cfg.predictor_layers; ++l) {
    add_layer_bufs(p, "pred" + std::to_string(l) + ".", cfg.model_dim, cfg.ffn_dim,
                   /*conditional=*/true, cfg.speaker_embed_dim);
  }
  add_buf(p, "spk_table", num_speakers, cfg.speaker_embed_dim, false);
  add_buf(p, "proj_w", cfg.model_dim, cfg.final_proj_dim, true);
  add_buf(p, "proj_b", 1, cfg.final_proj_dim, false);
  add_buf(p, "class_emb", cfg.num_classes, cfg.final_proj_dim, false);

  Rng rng(seed);
  const double std = 0.02;
  for (auto& b : p.bufs) {
    const bool is_ln_scale = b.name.ends_with("ln1_s") || b.name.ends_with("ln2_s") ||
                             b.name.ends_with("cln1_bs") || b.name.ends_with("cln2_bs");
    const bool is_bias = b.name.ends_with("_b") || b.name.ends_with(".bq") ||
                         b.name.ends_with(".bk") || b.name.ends_with(".bv") ||
                         b.name.ends_with(".bo") || b.name.ends_with(".b1") ||
                         b.name.ends_with(".b2") || b.name.ends_with("bb");
    if (is_ln_scale) {
      std::fill(b.data.begin(), b.data.end(), Real(1));
    } else if (is_bias) {
      std::fill(b.data.begin(), b.data.end(), Real(0));
    } else {
      for (auto& v : b.data) v = static_cast<Real>(rng.gaussian() * std);
    }
  }
  return p;
}

template <class Real>
ParamLeaves<Real> register_params(Tape<Real>& tape, const ModelParams<Real>& params,
                                  bool requires_grad) {
  ParamLeaves<Real> out;
  out.params = &params;
  out.leaves.reserve(params.bufs.size());
  for (const auto& b : params.bufs) {
    out.leaves.push_back(tape.leaf(b.rows, b.cols, b.data, requires_grad));
  }
  return out;
}

namespace {

template <class Real>
std::vector<Real> sinusoidal_positions(int64_t T, int dim) {
  std::vector<Real> pos(static_cast<size_t>(T * dim));
  for (int64_t t = 0; t < T; ++t) {
    for (int i = 0; i < dim / 2; ++i) {
      const double rate = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
      pos[static_cast<size_t>(t * dim + 2 * i)] =
          static_cast<Real>(std::sin(static_cast<double>(t) * rate));
      pos[static_cast<size_t>(t * dim + 2 * i + 1)] =
          static_cast<Real>(std::cos(static_cast<double>(t) * rate));
    }
  }
  return pos;
}

template <class Real>
Tensor<Real> transformer_layer(Tape<Real>& tape, Tensor<Real> x, int num_heads,
                               Tensor<Real> ln1_s, Tensor<Real> ln1_b,
                               Tensor<Real> ln2_s, Tensor<Real> ln2_b,
                               const ParamLeaves<Real>& p, const std::string& prefix) {
  const int64_t dm = x.cols();
  const int64_t dh = dm / num_heads;
  auto y = tape.layer_norm(x, ln1_s, ln1_b, static_cast<Real>(kLayerNormEps));
  auto q = tape.add_row(tape.matmul(y, p.of(prefix + "wq")), p.of(prefix + "bq"));
  auto k = tape.add_row(tape.matmul(y, p.of(prefix + "wk")), p.of(prefix + "bk"));
  auto v = tape.add_row(tape.matmul(y, p.of(prefix + "wv")), p.of(prefix + "bv"));
  std::vector<Tensor<Real>> heads;
  heads.reserve(static_cast<size_t>(num_heads));
  const Real inv_sqrt_dh = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (int h = 0; h < num_heads; ++h) {
    auto qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
    auto scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh);
    auto attn = tape.softmax_rows(scores);
    heads.push_back(tape.matmul(attn, vh));
  }
  auto ctx = tape.concat_cols(heads);
  auto attn_out = tape.add_row(tape.matmul(ctx, p.of(prefix + "wo")), p.of(prefix + "bo"));
  auto x1 = tape.add(x, attn_out);

  auto y2 = tape.layer_norm(x1, ln2_s, ln2_b, static_cast<Real>(kLayerNormEps));
  auto hidden = tape.gelu(
      tape.add_row(tape.matmul(y2, p.of(prefix + "w1")), p.of(prefix + "b1")));
  auto ffn = tape.add_row(tape.matmul(hidden, p.of(prefix + "w2")), p.of(prefix + "b2"));
  return tape.add(x1, ffn);
}

}  // namespace

template <class Real>
LayerOutputs<Real> encode(Tape<Real>& tape, const Mat<float>& frames,
                          const MaskSpec* mask, const ParamLeaves<Real>& p,
                          std::span<const uint8_t> drop_pattern) {
  const ModelConfig& cfg = p.params->cfg;
  VOXLAB_REQUIRE(frames.cols == p.params->input_dim, DimensionError,
                 "encode: frame dim " << frames.cols << " does not match input projection "
                                      << p.params->input_dim);
  VOXLAB_REQUIRE(drop_pattern.empty() ||
                     static_cast<int>(drop_pattern.size()) == cfg.num_encoder_layers,
                 ContractError, "encode: bad drop pattern size");
  const int64_t T = frames.rows;
  std::vector<Real> fdata(static_cast<size_t>(T * frames.cols));
  for (size_t i = 0; i < fdata.size(); ++i) fdata[i] = static_cast<Real>(frames.v[i]);
  auto x = tape.constant(T, frames.cols, fdata);

  auto h = tape.add_row(tape.matmul(x, p.of("in_proj_w")), p.of("in_proj_b"));
  if (mask != nullptr) {
    VOXLAB_REQUIRE(static_cast<int64_t>(mask->masked.size()) == T, DimensionError,
                   "encode: mask length " << mask->masked.size() << " for " << T
                                          << " frames");
    h = tape.replace_masked_rows(h, p.of("mask_emb"), mask->masked);
  }
  auto pos = tape.constant(T, cfg.model_dim, sinusoidal_positions<Real>(T, cfg.model_dim));
  h = tape.add(h, pos);

  LayerOutputs<Real> out;
  out.encoder.push_back(h);
  out.dropped.assign(static_cast<size_t>(cfg.num_encoder_layers), 0);
  for (int l = 1; l <= cfg.num_encoder_layers; ++l) {
    const bool drop = !drop_pattern.empty() && drop_pattern[static_cast<size_t>(l - 1)];
    if (drop) {
      out.dropped[static_cast<size_t>(l - 1)] = 1;
      out.encoder.push_back(h);  // identity skip
      continue;
    }
    const std::string prefix = "enc" + std::to_string(l) + ".";
    h = transformer_layer(tape, h, cfg.num_heads, p.of(prefix + "ln1_s"),
                          p.of(prefix + "ln1_b"), p.of(prefix + "ln2_s"),
                          p.of(prefix + "ln2_b"), p, prefix);
    out.encoder.push_back(h);
  }
  return out;
}

namespace {

template <class Real>
PredictorOutputs<Real> predict_impl(Tape<Real>& tape, Tensor<Real> rep,
                                    Tensor<Real> emb, const ParamLeaves<Real>& p) {
  const ModelConfig& cfg = p.params->cfg;
  VOXLAB_REQUIRE(rep.cols() == cfg.model_dim, DimensionError,
                 "predict: rep width " << rep.cols() << " != model_dim "
                                       << cfg.model_dim);
  PredictorOutputs<Real> out;
  auto h = rep;
  for (int l = 1; l <= cfg.predictor_layers; ++l) {
    const std::string prefix = "pred" + std::to_string(l) + ".";
    Tensor<Real> s1, b1, s2, b2;
    if (cfg.speaker_conditioning) {
      s1 = tape.add(tape.matmul(emb, p.of(prefix + "cln1_ws")), p.of(prefix + "cln1_bs"));
      b1 = tape.add(tape.matmul(emb, p.of(prefix + "cln1_wb")), p.of(prefix + "cln1_bb"));
      s2 = tape.add(tape.matmul(emb, p.of(prefix + "cln2_ws")), p.of(prefix + "cln2_bs"));
      b2 = tape.add(tape.matmul(emb, p.of(prefix + "cln2_wb")), p.of(prefix + "cln2_bb"));
    } else {
      s1 = p.of(prefix + "cln1_bs");
      b1 = p.of(prefix + "cln1_bb");
      s2 = p.of(prefix + "cln2_bs");
      b2 = p.of(prefix + "cln2_bb");
    }
    h = transformer_layer(tape, h, cfg.num_heads, s1, b1, s2, b2, p, prefix);
    out.layers.push_back(h);
  }
  auto proj = tape.add_row(tape.matmul(h, p.of("proj_w")), p.of("proj_b"));
  auto logits = tape.matmul_nt(
      tape.rows_l2_normalize(proj, static_cast<Real>(kCosineEps)),
      tape.rows_l2_normalize(p.of("class_emb"), static_cast<Real>(kCosineEps)));
  out.logits = tape.scale(logits, static_cast<Real>(1.0 / cfg.logit_temperature));
  return out;
}

}  // namespace

template <class Real>
PredictorOutputs<Real> predict(Tape<Real>& tape, Tensor<Real> rep, int speaker_id,
                               const ParamLeaves<Real>& p) {
  VOXLAB_REQUIRE(speaker_id >= 0 && speaker_id < p.params->num_speakers, IndexError,
                 "predict: unknown speaker id " << speaker_id << " (table has "
                                                << p.params->num_speakers << ")");
  const int32_t row = speaker_id;
  auto emb = tape.gather_rows(p.of("spk_table"), std::span<const int32_t>(&row, 1));
  return predict_impl(tape, rep, emb, p);
}

template <class Real>
PredictorOutputs<Real> predict_with_embedding(Tape<Real>& tape, Tensor<Real> rep,
                                              std::span<const Real> embedding,
                                              const ParamLeaves<Real>& p) {
  VOXLAB_REQUIRE(static_cast<int>(embedding.size()) == p.params->cfg.speaker_embed_dim,
                 DimensionError, "predict_with_embedding: embedding size mismatch");
  auto emb = tape.constant(1, p.params->cfg.speaker_embed_dim, embedding);
  return predict_impl(tape, rep, emb, p);
}

template <class Real>
std::vector<Real> neutral_speaker_embedding(const ModelParams<Real>& params) {
  const auto& table = params.buf("spk_table");
  std::vector<Real> mean(static_cast<size_t>(table.cols), Real(0));
  for (int64_t r = 0; r < table.rows; ++r) {
    for (int64_t c = 0; c < table.cols; ++c)
      mean[static_cast<size_t>(c)] += table.data[static_cast<size_t>(r * table.cols + c)];
  }
  for (auto& v : mean) v /= static_cast<Real>(table.rows);
  return mean;
}

namespace {

template <class Real>
const char* precision_name();
template <>
const char* precision_name<float>() {
  return "f32";
}
template <>
const char* precision_name<double>() {
  return "f64";
}

}  // namespace

template <class Real>
void save_checkpoint(const Checkpoint<Real>& ckpt, const fs::path& path) {
  Json header;
  header["format"] = "voxlab-checkpoint";
  header["version"] = 1;
  header["precision"] = precision_name<Real>();
  header["config"] = ckpt.params.cfg.to_json();
  header["input_dim"] = ckpt.params.input_dim;
  header["num_speakers"] = ckpt.params.num_speakers;
  header["step"] = ckpt.step;
  header["rng"] = Json{{"root_seed", static_cast<int64_t>(ckpt.root_seed)}};
  header["teacher_id"] = ckpt.teacher_id;
  Json bufs = Json::array();
  for (const auto& b : ckpt.params.bufs) {
    bufs.push_back(Json{{"name", b.name}, {"rows", b.rows}, {"cols", b.cols},
                        {"decay", b.decay}});
  }
  header["bufs"] = std::move(bufs);
  Json extras = Json::array();
  for (const auto& [key, vecs] : ckpt.extra) {
    VOXLAB_REQUIRE(vecs.size() == ckpt.params.bufs.size(), ContractError,
                   "checkpoint extra '" << key << "' is not aligned with buffers");
    extras.push_back(key);
  }
  header["extra"] = std::move(extras);

  std::vector<Real> payload;
  payload.reserve(static_cast<size_t>(ckpt.params.num_params()) *
                  (1 + ckpt.extra.size()));
  for (const auto& b : ckpt.params.bufs)
    payload.insert(payload.end(), b.data.begin(), b.data.end());
  for (const auto& [key, vecs] : ckpt.extra) {
    for (size_t i = 0; i < vecs.size(); ++i) {
      VOXLAB_REQUIRE(vecs[i].size() == ckpt.params.bufs[i].data.size(), ContractError,
                     "checkpoint extra '" << key << "' has wrong size at buffer " << i);
      payload.insert(payload.end(), vecs[i].begin(), vecs[i].end());
    }
  }
  write_blob(path, "VXCK1", header, payload.data(), payload.size() * sizeof(Real));
}

template <class Real>
Checkpoint<Real> load_checkpoint_as(const fs::path& path) {
  const BlobFile blob = read_blob(path, "VXCK1");
  JsonView v(blob.header, "checkpoint");
  VOXLAB_REQUIRE(v.get_string("precision") == precision_name<Real>(), ConfigError,
                 path.string() << ": precision mismatch, file has "
                               << v.get_string("precision"));
  Checkpoint<Real> ckpt;
  ckpt.params.cfg = ModelConfig::from_json(v.at("config"));
  ckpt.params.input_dim = static_cast<int>(v.get_int("input_dim"));
  ckpt.params.num_speakers = static_cast<int>(v.get_int("num_speakers"));
  ckpt.step = v.get_int("step");
  ckpt.root_seed = static_cast<uint64_t>(v.at("rng").get_int("root_seed"));
  ckpt.teacher_id = v.get_string("teacher_id", "");

  const auto* data = reinterpret_cast<const Real*>(blob.payload.data());
  const size_t total = blob.payload.size() / sizeof(Real);
  size_t off = 0;
  for (const auto& jb : blob.header.at("bufs")) {
    ParamBuf<Real> b;
    b.name = jb.at("name").get<std::string>();
    b.rows = jb.at("rows").get<int64_t>();
    b.cols = jb.at("cols").get<int64_t>();
    b.decay = jb.at("decay").get<bool>();
    const size_t count = static_cast<size_t>(b.rows * b.cols);
    VOXLAB_REQUIRE(off + count <= total, IoError, path.string() << ": truncated payload");
    b.data.assign(data + off, data + off + count);
    off += count;
    ckpt.params.index[b.name] = static_cast<int>(ckpt.params.bufs.size());
    ckpt.params.bufs.push_back(std::move(b));
  }
  for (const auto& jk : blob.header.at("extra")) {
    const std::string key = jk.get<std::string>();
    std::vector<std::vector<Real>> vecs;
    vecs.reserve(ckpt.params.bufs.size());
    for (const auto& b : ckpt.params.bufs) {
      const size_t count = static_cast<size_t>(b.rows * b.cols);
      VOXLAB_REQUIRE(off + count <= total, IoError, path.string() << ": truncated extras");
      vecs.emplace_back(data + off, data + off + count);
      off += count;
    }
    ckpt.extra[key] = std::move(vecs);
  }
  VOXLAB_REQUIRE(off == total, IoError, path.string() << ": trailing bytes in payload");
  return ckpt;
}

AnyCheckpoint load_checkpoint(const fs::path& path) {
  const BlobFile blob = read_blob(path, "VXCK1");
  JsonView v(blob.header, "checkpoint");
  const std::string precision = v.get_string("precision");
  if (precision == "f32") return load_checkpoint_as<float>(path);
  if (precision == "f64") return load_checkpoint_as<double>(path);
  VOXLAB_THROW(ConfigError, path.string() << ": unknown precision " << precision);
}

const ModelConfig& checkpoint_config(const AnyCheckpoint& ckpt) {
  return std::visit([](const auto& c) -> const ModelConfig& { return c.params.cfg; }, ckpt);
}

int64_t checkpoint_step(const AnyCheckpoint& ckpt) {
  return std::visit([](const auto& c) { return c.step; }, ckpt);
}

// Explicit instantiations.
template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_model_params<float>(const ModelConfig&, int, int,
                                                     uint64_t);
template ModelParams<double> init_model_params<double>(const ModelConfig&, int, int,
                                                       uint64_t);
template ParamLeaves<float> register_params<float>(Tape<float>&,
                                                   const ModelParams<float>&, bool);
template ParamLeaves<double> register_params<double>(Tape<double>&,
                                                     const ModelParams<double>&, bool);
template LayerOutputs<float> encode<float>(Tape<float>&, const Mat<float>&,
                                           const MaskSpec*, const ParamLeaves<float>&,
                                           std::span<const uint8_t>);
template LayerOutputs<double> encode<double>(Tape<double>&, const Mat<float>&,
                                             const MaskSpec*, const ParamLeaves<double>&,
                                             std::span<const uint8_t>);
template PredictorOutputs<float> predict<float>(Tape<float>&, Tensor<float>, int,
                                                const ParamLeaves<float>&);
template PredictorOutputs<double> predict<double>(Tape<double>&, Tensor<double>, int,
                                                  const ParamLeaves<double>&);
template PredictorOutputs<float> predict_with_embedding<float>(
    Tape<float>&, Tensor<float>, std::span<const float>, const ParamLeaves<float>&);
template PredictorOutputs<double> predict_with_embedding<double>(
    Tape<double>&, Tensor<double>, std::span<const double>, const ParamLeaves<double>&);
template std::vector<float> neutral_speaker_embedding<float>(const ModelParams<float>&);
template std::vector<double> neutral_speaker_embedding<double>(
    const ModelParams<double>&);
template void save_checkpoint<float>(const Checkpoint<float>&, const fs::path&);
template void save_checkpoint<double>(const Checkpoint<double>&, const fs::path&);
template Checkpoint<float> load_checkpoint_as<float>(const fs::path&);
template Checkpoint<double> load_checkpoint_as<double>(const fs::path&);

}  // namespace voxlab
