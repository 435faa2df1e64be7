// voxlab/trainer.cc

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

#include "voxlab/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <thread>

namespace voxlab {

namespace fs = std::filesystem;

OptimizerConfig OptimizerConfig::from_json(const JsonView& v) {
  OptimizerConfig c;
  c.lr = v.get_double("lr", c.lr);
  c.beta1 = v.get_double("beta1", c.beta1);
  c.beta2 = v.get_double("beta2", c.beta2);
  c.eps = v.get_double("eps", c.eps);
  c.weight_decay = v.get_double("weight_decay", c.weight_decay);
  c.warmup_frac = v.get_double("warmup_frac", c.warmup_frac);
  return c;
}

Json OptimizerConfig::to_json() const {
  Json j;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["weight_decay"] = weight_decay;
  j["warmup_frac"] = warmup_frac;
  return j;
}

template <class Real>
AdamState<Real> AdamState<Real>::init(const ModelParams<Real>& params) {
  AdamState<Real> s;
  s.m.reserve(params.bufs.size());
  s.v.reserve(params.bufs.size());
  for (const auto& b : params.bufs) {
    s.m.emplace_back(b.data.size(), Real(0));
    s.v.emplace_back(b.data.size(), Real(0));
  }
  return s;
}

double warmup_lr(const OptimizerConfig& hyper, int64_t step, int64_t total_steps) {
  const int64_t warmup =
      std::max<int64_t>(1, std::llround(hyper.warmup_frac * static_cast<double>(total_steps)));
  const double frac = std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup));
  return hyper.lr * frac;
}

template <class Real>
void optimizer_step(ModelParams<Real>& params,
                    const std::vector<std::vector<Real>>& grads,
                    AdamState<Real>& state, const OptimizerConfig& hyper, double lr) {
  VOXLAB_REQUIRE(grads.size() == params.bufs.size(), ContractError,
                 "optimizer_step: gradient buffers not aligned with parameters");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (size_t bi = 0; bi < params.bufs.size(); ++bi) {
    auto& buf = params.bufs[bi];
    const auto& g = grads[bi];
    VOXLAB_REQUIRE(g.size() == buf.data.size(), ContractError,
                   "optimizer_step: gradient size mismatch for " << buf.name);
    auto& m = state.m[bi];
    auto& v = state.v[bi];
    const double wd = buf.decay ? hyper.weight_decay : 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      VOXLAB_REQUIRE(std::isfinite(gi), NumericError,
                     "optimizer_step: non-finite gradient in " << buf.name);
      const double mi = hyper.beta1 * static_cast<double>(m[i]) + (1.0 - hyper.beta1) * gi;
      const double vi =
          hyper.beta2 * static_cast<double>(v[i]) + (1.0 - hyper.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      const double update =
          mhat / (std::sqrt(vhat) + hyper.eps) + wd * static_cast<double>(buf.data[i]);
      buf.data[i] = static_cast<Real>(static_cast<double>(buf.data[i]) - lr * update);
    }
  }
}

const char* variant_name(TrainVariant v) {
  switch (v) {
    case TrainVariant::kContentVec:
      return "contentvec";
    case TrainVariant::kHubertIter:
      return "hubert_iter";
    case TrainVariant::kNoDt:
      return "no_dt";
    case TrainVariant::kNoDs:
      return "no_ds";
    case TrainVariant::kNoCond:
      return "no_cond";
  }
  return "contentvec";
}

TrainVariant variant_from_name(const std::string& name) {
  if (name == "contentvec") return TrainVariant::kContentVec;
  if (name == "hubert_iter") return TrainVariant::kHubertIter;
  if (name == "no_dt") return TrainVariant::kNoDt;
  if (name == "no_ds") return TrainVariant::kNoDs;
  if (name == "no_cond") return TrainVariant::kNoCond;
  VOXLAB_THROW(ConfigError,
               "unknown variant '" << name
                                   << "' (expected one of {contentvec, hubert_iter, "
                                      "no_dt, no_ds, no_cond})");
}

VariantTraits variant_traits(TrainVariant v) {
  switch (v) {
    case TrainVariant::kContentVec:
      return {true, true, true, true};
    case TrainVariant::kHubertIter:
      // Plain masked prediction guided by non-converted teachers.
      return {false, false, false, false};
    case TrainVariant::kNoDt:
      return {true, true, true, false};
    case TrainVariant::kNoDs:
      return {false, false, true, true};
    case TrainVariant::kNoCond:
      return {true, true, false, true};
  }
  return {true, true, true, true};
}

void TrainConfig::validate() const {
  VOXLAB_REQUIRE(total_steps >= 1, ConfigError, "train.total_steps: must be >= 1");
  VOXLAB_REQUIRE(batch_size >= 1, ConfigError, "train.batch_size: must be >= 1");
  VOXLAB_REQUIRE(eval_every >= 1, ConfigError, "train.eval_every: must be >= 1");
  VOXLAB_REQUIRE(checkpoint_every >= 1, ConfigError,
                 "train.checkpoint_every: must be >= 1");
  VOXLAB_REQUIRE(precision == "f32" || precision == "f64", ConfigError,
                 "train.precision: must be f32 or f64, got " << precision);
  VOXLAB_REQUIRE(threads >= 1, ConfigError, "train.threads: must be >= 1");
  VOXLAB_REQUIRE(lambda_max >= 0.0, ConfigError, "train.lambda_max: must be >= 0");
  model.validate();
  contrastive.validate();
  const VariantTraits traits = variant_traits(variant);
  VOXLAB_REQUIRE(model.speaker_conditioning == traits.conditioning, ConfigError,
                 "train.model.speaker_conditioning: inconsistent with variant "
                     << variant_name(variant));
}

TrainConfig TrainConfig::from_json(const JsonView& v) {
  TrainConfig c;
  c.variant = variant_from_name(v.get_string("variant", "contentvec"));
  c.total_steps = v.get_int("total_steps", c.total_steps);
  c.batch_size = static_cast<int>(v.get_int("batch_size", c.batch_size));
  if (v.has("optimizer")) c.optimizer = OptimizerConfig::from_json(v.at("optimizer"));
  c.seed = static_cast<uint64_t>(v.get_int("seed", 1));
  c.eval_every = v.get_int("eval_every", c.eval_every);
  c.checkpoint_every = v.get_int("checkpoint_every", c.checkpoint_every);
  if (v.has("model")) {
    c.model = ModelConfig::from_json(v.at("model"));
  }
  c.model.speaker_conditioning = variant_traits(c.variant).conditioning;
  if (v.has("contrastive")) c.contrastive = ContrastiveConfig::from_json(v.at("contrastive"));
  c.lambda_max = v.get_double("lambda_max", c.lambda_max);
  c.precision = v.get_string("precision", c.precision);
  c.deterministic = v.get_bool("deterministic", c.deterministic);
  c.threads = static_cast<int>(v.get_int("threads", c.threads));
  c.validate();
  return c;
}

Json TrainConfig::to_json() const {
  Json j;
  j["variant"] = variant_name(variant);
  j["total_steps"] = total_steps;
  j["batch_size"] = batch_size;
  j["optimizer"] = optimizer.to_json();
  j["seed"] = static_cast<int64_t>(seed);
  j["eval_every"] = eval_every;
  j["checkpoint_every"] = checkpoint_every;
  j["model"] = model.to_json();
  j["contrastive"] = contrastive.to_json();
  j["lambda_max"] = lambda_max;
  j["precision"] = precision;
  j["deterministic"] = deterministic;
  j["threads"] = threads;
  return j;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::string losses_csv(const ExperimentRecord& record) {
  std::string out = "step,pred_loss,contr_loss,lambda,combined,tap_layer\n";
  for (const auto& row : record.losses) {
    out += std::to_string(row.step);
    out += ",";
    out += format_double(row.pred_loss);
    out += ",";
    if (row.contr_loss.has_value()) out += format_double(*row.contr_loss);
    out += ",";
    out += format_double(row.lambda);
    out += ",";
    out += format_double(row.combined);
    out += ",";
    if (row.tap_layer.has_value()) out += std::to_string(*row.tap_layer);
    out += "\n";
  }
  return out;
}

std::string val_csv(const ExperimentRecord& record) {
  std::string out = "step,val_pred,val_contr,val_combined\n";
  for (const auto& row : record.val) {
    out += std::to_string(row.step);
    out += ",";
    out += format_double(row.pred);
    out += ",";
    if (row.contr.has_value()) out += format_double(*row.contr);
    out += ",";
    out += format_double(row.combined);
    out += "\n";
  }
  return out;
}

std::vector<BatchItem> assemble_batch(const Corpus& corpus, const TrainConfig& config,
                                      int64_t step) {
  const VariantTraits traits = variant_traits(config.variant);
  const auto train_ids = corpus.utterance_ids(Split::kTrain);
  VOXLAB_REQUIRE(!train_ids.empty(), ContractError, "assemble_batch: empty train split");
  Rng step_rng = Rng(config.seed).child("step", static_cast<uint64_t>(step));
  Rng pick_rng = step_rng.child("batch");
  const int take = std::min<int>(config.batch_size, static_cast<int>(train_ids.size()));
  const auto picks = pick_rng.sample_without_replacement(
      static_cast<int32_t>(train_ids.size()), take, -1);

  std::vector<BatchItem> batch(static_cast<size_t>(take));
  const double noise = corpus.config.noise_std;
  const int D = corpus.config.feat_dim;
  for (int i = 0; i < take; ++i) {
    const int utt_id = train_ids[static_cast<size_t>(picks[static_cast<size_t>(i)])];
    const Utterance& u = corpus.utterances[static_cast<size_t>(utt_id)];
    BatchItem& item = batch[static_cast<size_t>(i)];
    item.utt_id = utt_id;
    Rng urng = step_rng.child("utt", static_cast<uint64_t>(i));
    const int64_t T = u.num_frames();
    if (traits.dual_views) {
      // Independent transforms, fresh noise per view.
      const auto p1 = sample_transform(D, urng);
      const auto p2 = sample_transform(D, urng);
      item.view1 = apply_transform(u, p1, corpus.inventory, noise, &urng).frames;
      item.view2 = apply_transform(u, p2, corpus.inventory, noise, &urng).frames;
    } else {
      item.view1 = u.frames;
    }
    item.mask1 = sample_mask(T, config.model.mask_prob, config.model.mask_span, urng);
    if (traits.dual_views) {
      item.mask2 = sample_mask(T, config.model.mask_prob, config.model.mask_span, urng);
    }
    if (traits.use_contrastive) {
      item.negatives = sample_negatives_all(T, config.contrastive.num_negatives, urng);
    }
  }
  return batch;
}

namespace {

template <class Real>
struct StepResult {
  std::vector<std::vector<Real>> grads;  // aligned with bufs, batch mean
  double pred = 0;
  double contr = 0;
  bool has_contr = false;
};

// Forward/backward for one utterance; returns per-buffer gradients.
template <class Real>
StepResult<Real> utterance_pass(const ModelParams<Real>& params, const BatchItem& item,
                                const Corpus& corpus, const TeacherSet& teachers,
                                const TrainConfig& config, const VariantTraits& traits,
                                std::span<const uint8_t> drop_pattern, int tap_index,
                                int64_t step, const LambdaSchedule& sched) {
  Tape<Real> tape;
  auto leaves = register_params(tape, params);
  const Utterance& u = corpus.utterances[static_cast<size_t>(item.utt_id)];
  const auto& labels = teachers.labels[static_cast<size_t>(item.utt_id)];

  const auto enc1 = encode(tape, item.view1, &item.mask1, leaves, drop_pattern);
  std::optional<LayerOutputs<Real>> enc2;
  if (traits.dual_views)
    enc2 = encode(tape, item.view2, &item.mask2, leaves, drop_pattern);

  const int speaker = u.speaker.speaker_id;
  const auto pred1 = predict(tape, enc1.encoder.back(), speaker, leaves);
  std::vector<ViewLogits<Real>> views{{pred1.logits, &item.mask1}};
  if (traits.dual_views) {
    const auto pred2 = predict(tape, enc2->encoder.back(), speaker, leaves);
    views.push_back({pred2.logits, &item.mask2});
  }
  auto pred_loss = masked_prediction_loss<Real>(tape, views, labels);

  Tensor<Real> contr;
  if (traits.use_contrastive) {
    contr = contrastive_loss<Real>(
        tape, enc1.encoder[static_cast<size_t>(tap_index)],
        enc2->encoder[static_cast<size_t>(tap_index)], item.negatives,
        config.contrastive.temperature);
  }
  auto total = combined_loss<Real>(tape, pred_loss, contr, step, sched);
  const double total_v = static_cast<double>(tape.scalar_value(total));
  VOXLAB_REQUIRE(std::isfinite(total_v), NumericError,
                 "train: non-finite loss at step " << step << " on utterance "
                                                   << item.utt_id);
  tape.backward(total);

  StepResult<Real> out;
  out.pred = static_cast<double>(tape.scalar_value(pred_loss));
  if (contr.valid()) {
    out.contr = static_cast<double>(tape.scalar_value(contr));
    out.has_contr = true;
  }
  out.grads.reserve(params.bufs.size());
  for (const auto& leaf : leaves.leaves) {
    const auto g = tape.grad(leaf);
    out.grads.emplace_back(g.begin(), g.end());
  }
  return out;
}

// Validation losses over the whole valid split: masked prediction on the
// clean utterance, plus (for dual-view variants) the contrastive term on
// seed-fixed views, both deterministic across evaluations.
template <class Real>
ValRow validation_pass(const ModelParams<Real>& params, const Corpus& corpus,
                       const TeacherSet& teachers, const TrainConfig& config,
                       const VariantTraits& traits, int64_t step,
                       const LambdaSchedule& sched) {
  const auto ids = corpus.utterance_ids(Split::kValid);
  ValRow row;
  row.step = step;
  double pred_sum = 0;
  double contr_sum = 0;
  int64_t count = 0;
  const int tap = config.contrastive.tap_layer > 0
                      ? config.contrastive.tap_layer
                      : config.model.effective_contrastive_layer();
  for (const int id : ids) {
    const Utterance& u = corpus.utterances[static_cast<size_t>(id)];
    Rng urng = Rng(config.seed).child("val", static_cast<uint64_t>(id));
    const auto mask =
        sample_mask(u.num_frames(), config.model.mask_prob, config.model.mask_span, urng);
    Tape<Real> tape;
    auto leaves = register_params(tape, params, /*requires_grad=*/false);
    const auto enc = encode(tape, u.frames, &mask, leaves, {});
    const auto out = predict(tape, enc.encoder.back(), u.speaker.speaker_id, leaves);
    std::vector<ViewLogits<Real>> views{{out.logits, &mask}};
    pred_sum += static_cast<double>(tape.scalar_value(
        masked_prediction_loss<Real>(tape, views, teachers.labels[static_cast<size_t>(id)])));
    if (traits.use_contrastive) {
      const auto p1 = sample_transform(corpus.config.feat_dim, urng);
      const auto p2 = sample_transform(corpus.config.feat_dim, urng);
      const auto v1 =
          apply_transform(u, p1, corpus.inventory, corpus.config.noise_std, &urng);
      const auto v2 =
          apply_transform(u, p2, corpus.inventory, corpus.config.noise_std, &urng);
      const auto negs =
          sample_negatives_all(u.num_frames(), config.contrastive.num_negatives, urng);
      const auto e1 = encode(tape, v1.frames, nullptr, leaves, {});
      const auto e2 = encode(tape, v2.frames, nullptr, leaves, {});
      contr_sum += static_cast<double>(tape.scalar_value(contrastive_loss<Real>(
          tape, e1.encoder[static_cast<size_t>(tap)],
          e2.encoder[static_cast<size_t>(tap)], negs,
          config.contrastive.temperature)));
    }
    ++count;
  }
  row.pred = pred_sum / static_cast<double>(count);
  if (traits.use_contrastive) {
    row.contr = contr_sum / static_cast<double>(count);
    row.combined = row.pred + sched(step) * (*row.contr);
  } else {
    row.combined = row.pred;
  }
  return row;
}

template <class Real>
ExperimentRecord train_impl(const TrainConfig& config, const Corpus& corpus,
                            const TeacherSet& teachers,
                            const std::optional<fs::path>& out_dir,
                            const std::optional<fs::path>& resume_from) {
  const VariantTraits traits = variant_traits(config.variant);

  VOXLAB_REQUIRE(teachers.labels.size() == corpus.utterances.size(), ContractError,
                 "train: teacher labels missing for some utterances ("
                     << teachers.labels.size() << " label sequences, "
                     << corpus.utterances.size() << " utterances)");
  for (const auto& u : corpus.utterances) {
    VOXLAB_REQUIRE(teachers.labels[static_cast<size_t>(u.id)].size() ==
                       static_cast<size_t>(u.num_frames()),
                   ContractError,
                   "train: teacher label length mismatch for utterance " << u.id);
  }
  VOXLAB_REQUIRE(teachers.config.K == config.model.num_classes, ConfigError,
                 "train.model.num_classes: " << config.model.num_classes
                                             << " does not match teacher codebook K="
                                             << teachers.config.K);
  // Variant/teacher consistency (raw-feature teachers for no_dt/hubert_iter,
  // speaker-normalized teachers otherwise; model_layer teachers pass).
  if (teachers.config.mode == TeacherMode::kRawFrames) {
    VOXLAB_REQUIRE(!traits.normalized_teachers, ConfigError,
                   "variant " << variant_name(config.variant)
                              << " expects speaker-normalized teachers, got raw_frames");
  } else if (teachers.config.mode == TeacherMode::kNormalizedFrames) {
    VOXLAB_REQUIRE(traits.normalized_teachers, ConfigError,
                   "variant " << variant_name(config.variant)
                              << " expects raw-feature teachers, got normalized_frames");
  }

  ExperimentRecord record;
  record.config = config;
  record.teacher_id = teachers.id;
  record.views_per_step = traits.dual_views ? 2 : 1;

  ModelParams<Real> params;
  AdamState<Real> adam;
  int64_t start_step = 0;
  if (resume_from.has_value()) {
    auto ckpt = load_checkpoint_as<Real>(*resume_from);
    VOXLAB_REQUIRE(ckpt.params.cfg.to_json() == config.model.to_json(), ConfigError,
                   "resume: checkpoint model config differs from train config");
    VOXLAB_REQUIRE(ckpt.root_seed == config.seed, ConfigError,
                   "resume: checkpoint seed differs from train config");
    VOXLAB_REQUIRE(ckpt.teacher_id == teachers.id, ConfigError,
                   "resume: checkpoint was trained with different teacher labels");
    params = std::move(ckpt.params);
    adam = AdamState<Real>::init(params);
    VOXLAB_REQUIRE(ckpt.extra.count("adam_m") == 1 && ckpt.extra.count("adam_v") == 1,
                   ConfigError, "resume: checkpoint has no optimizer state");
    adam.m = std::move(ckpt.extra["adam_m"]);
    adam.v = std::move(ckpt.extra["adam_v"]);
    adam.t = ckpt.step;
    start_step = ckpt.step;
  } else {
    params = init_model_params<Real>(config.model, corpus.config.feat_dim,
                                     corpus.config.num_speakers,
                                     Rng(config.seed).child("init").seed());
    adam = AdamState<Real>::init(params);
  }

  LambdaSchedule sched;
  sched.lambda_max = config.lambda_max;
  sched.total_steps = config.total_steps;
  const int nominal_tap = config.contrastive.tap_layer > 0
                              ? config.contrastive.tap_layer
                              : config.model.effective_contrastive_layer();
  VOXLAB_REQUIRE(nominal_tap >= 1 && nominal_tap <= config.model.num_encoder_layers,
                 ConfigError, "contrastive.tap_layer: out of range");

  auto save_ckpt = [&](int64_t step, const fs::path& path) {
    Checkpoint<Real> ckpt;
    ckpt.params = params;
    ckpt.step = step;
    ckpt.root_seed = config.seed;
    ckpt.teacher_id = teachers.id;
    ckpt.extra["adam_m"] = adam.m;
    ckpt.extra["adam_v"] = adam.v;
    save_checkpoint(ckpt, path);
  };

  record.best_val_pred = std::numeric_limits<double>::infinity();
  std::optional<Checkpoint<Real>> best_snapshot;

  for (int64_t step = start_step; step < config.total_steps; ++step) {
    const auto batch = assemble_batch(corpus, config, step);
    Rng drop_rng = Rng(config.seed).child("step", static_cast<uint64_t>(step)).child("layerdrop");
    const auto drop = sample_layer_drop(config.model, drop_rng);
    const int tap_index =
        effective_tap_layer(nominal_tap, config.model.num_encoder_layers, drop);

    std::vector<StepResult<Real>> results(batch.size());
    parallel_for(static_cast<int64_t>(batch.size()), config.threads, [&](int64_t i) {
      results[static_cast<size_t>(i)] =
          utterance_pass<Real>(params, batch[static_cast<size_t>(i)], corpus, teachers,
                               config, traits, drop, tap_index, step, sched);
    });

    // Fixed-order reduction keeps runs bitwise reproducible.
    std::vector<std::vector<Real>> grads;
    grads.reserve(params.bufs.size());
    for (const auto& b : params.bufs) grads.emplace_back(b.data.size(), Real(0));
    double pred_mean = 0, contr_mean = 0;
    const Real inv_b = static_cast<Real>(1.0 / static_cast<double>(batch.size()));
    for (const auto& r : results) {
      for (size_t bi = 0; bi < grads.size(); ++bi) {
        const auto& src = r.grads[bi];
        auto& dst = grads[bi];
        for (size_t k = 0; k < dst.size(); ++k) dst[k] += src[k] * inv_b;
      }
      pred_mean += r.pred;
      contr_mean += r.contr;
    }
    pred_mean /= static_cast<double>(batch.size());
    contr_mean /= static_cast<double>(batch.size());

    const double lr = warmup_lr(config.optimizer, step, config.total_steps);
    optimizer_step(params, grads, adam, config.optimizer, lr);

    LossRow row;
    row.step = step + 1;
    row.pred_loss = pred_mean;
    row.lambda = sched(step);
    if (traits.use_contrastive) {
      row.contr_loss = contr_mean;
      row.combined = pred_mean + row.lambda * contr_mean;
      row.tap_layer = tap_index;
    } else {
      row.combined = pred_mean;
    }
    record.losses.push_back(row);

    const int64_t done = step + 1;
    const bool is_eval = done % config.eval_every == 0 || done == config.total_steps;
    if (is_eval) {
      const ValRow val =
          validation_pass<Real>(params, corpus, teachers, config, traits, done, sched);
      record.val.push_back(val);
      if (val.pred < record.best_val_pred) {
        record.best_val_pred = val.pred;
        record.best_step = done;
        Checkpoint<Real> snap;
        snap.params = params;
        snap.step = done;
        snap.root_seed = config.seed;
        snap.teacher_id = teachers.id;
        snap.extra["adam_m"] = adam.m;
        snap.extra["adam_v"] = adam.v;
        best_snapshot = std::move(snap);
      }
    }
    const bool is_ckpt = done % config.checkpoint_every == 0 || done == config.total_steps;
    if (is_ckpt && out_dir.has_value()) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%08lld.bin",
                    static_cast<long long>(done));
      const fs::path path = *out_dir / "checkpoints" / name;
      save_ckpt(done, path);
      record.checkpoint_files.emplace_back(done, std::string("checkpoints/") + name);
    }
  }

  {
    Checkpoint<Real> last;
    last.params = params;
    last.step = config.total_steps;
    last.root_seed = config.seed;
    last.teacher_id = teachers.id;
    last.extra["adam_m"] = adam.m;
    last.extra["adam_v"] = adam.v;
    record.final_checkpoint = AnyCheckpoint(std::move(last));
  }
  if (best_snapshot.has_value()) {
    record.best_checkpoint = AnyCheckpoint(std::move(*best_snapshot));
  }

  if (out_dir.has_value()) {
    write_file_text(*out_dir / "losses.csv", losses_csv(record));
    write_file_text(*out_dir / "valid.csv", val_csv(record));
    if (record.best_checkpoint.has_value()) {
      std::visit([&](const auto& c) { save_checkpoint(c, *out_dir / "checkpoints" / "best.bin"); },
                 *record.best_checkpoint);
    }
  }
  return record;
}

}  // namespace

ExperimentRecord train(const TrainConfig& config, const Corpus& corpus,
                       const TeacherSet& teachers,
                       const std::optional<fs::path>& out_dir,
                       const std::optional<fs::path>& resume_from) {
  config.validate();
  if (out_dir.has_value()) fs::create_directories(*out_dir / "checkpoints");
  if (config.precision == "f64") {
    return train_impl<double>(config, corpus, teachers, out_dir, resume_from);
  }
  return train_impl<float>(config, corpus, teachers, out_dir, resume_from);
}

template struct AdamState<float>;
template struct AdamState<double>;
template void optimizer_step<float>(ModelParams<float>&,
                                    const std::vector<std::vector<float>>&,
                                    AdamState<float>&, const OptimizerConfig&, double);
template void optimizer_step<double>(ModelParams<double>&,
                                     const std::vector<std::vector<double>>&,
                                     AdamState<double>&, const OptimizerConfig&, double);

}  // namespace voxlab
