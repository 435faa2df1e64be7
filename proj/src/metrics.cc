// voxlab/metrics.cc

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

#include "voxlab/metrics.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "voxlab/rng.h"

namespace voxlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

Standardizer fit_standardizer(const Mat<double>& x, const std::vector<int>& split) {
  Standardizer s;
  s.mean.assign(static_cast<size_t>(x.cols), 0.0);
  s.inv_std.assign(static_cast<size_t>(x.cols), 1.0);
  int64_t n = 0;
  for (int64_t i = 0; i < x.rows; ++i) {
    if (split[static_cast<size_t>(i)] != 0) continue;
    ++n;
    for (int64_t j = 0; j < x.cols; ++j) s.mean[static_cast<size_t>(j)] += x.at(i, j);
  }
  for (auto& m : s.mean) m /= std::max<int64_t>(n, 1);
  std::vector<double> var(static_cast<size_t>(x.cols), 0.0);
  for (int64_t i = 0; i < x.rows; ++i) {
    if (split[static_cast<size_t>(i)] != 0) continue;
    for (int64_t j = 0; j < x.cols; ++j) {
      const double c = x.at(i, j) - s.mean[static_cast<size_t>(j)];
      var[static_cast<size_t>(j)] += c * c;
    }
  }
  for (int64_t j = 0; j < x.cols; ++j) {
    const double sd = std::sqrt(var[static_cast<size_t>(j)] / std::max<int64_t>(n, 1));
    s.inv_std[static_cast<size_t>(j)] = 1.0 / std::max(sd, 1e-8);
  }
  return s;
}

}  // namespace

ProbeResult linear_probe(const Mat<double>& features,
                         const std::vector<int32_t>& labels,
                         const std::vector<int>& split, int num_classes,
                         const ProbeHyper& hyper) {
  const int64_t n = features.rows;
  const int64_t d = features.cols;
  VOXLAB_REQUIRE(static_cast<int64_t>(labels.size()) == n, DimensionError,
                 "linear_probe: " << labels.size() << " labels for " << n << " rows");
  VOXLAB_REQUIRE(static_cast<int64_t>(split.size()) == n, DimensionError,
                 "linear_probe: split size mismatch");
  VOXLAB_REQUIRE(num_classes >= 2, ContractError, "linear_probe: need >= 2 classes");
  std::set<int32_t> train_classes;
  for (int64_t i = 0; i < n; ++i) {
    VOXLAB_REQUIRE(labels[static_cast<size_t>(i)] >= 0 &&
                       labels[static_cast<size_t>(i)] < num_classes,
                   IndexError, "linear_probe: label out of range");
    if (split[static_cast<size_t>(i)] == 0)
      train_classes.insert(labels[static_cast<size_t>(i)]);
  }
  for (int64_t i = 0; i < n; ++i) {
    if (split[static_cast<size_t>(i)] == 2) {
      VOXLAB_REQUIRE(train_classes.count(labels[static_cast<size_t>(i)]) == 1,
                     ContractError,
                     "linear_probe: test label " << labels[static_cast<size_t>(i)]
                                                 << " unseen in train");
    }
  }

  const Standardizer st = fit_standardizer(features, split);
  Mat<double> x(n, d);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      x.at(i, j) = (features.at(i, j) - st.mean[static_cast<size_t>(j)]) *
                   st.inv_std[static_cast<size_t>(j)];
    }
  }

  const int C = num_classes;
  Mat<double> w(C, d + 1);       // last column is the bias
  Mat<double> best_w(C, d + 1);
  Mat<double> logits(n, C);
  Mat<double> grad(C, d + 1);

  std::vector<int64_t> train_rows;
  for (int64_t i = 0; i < n; ++i)
    if (split[static_cast<size_t>(i)] == 0) train_rows.push_back(i);
  VOXLAB_REQUIRE(!train_rows.empty(), ContractError, "linear_probe: no train rows");

  auto forward_row = [&](int64_t i) {
    for (int c = 0; c < C; ++c) {
      double acc = w.at(c, d);
      const double* wc = w.row(c);
      const double* xi = x.row(i);
      for (int64_t j = 0; j < d; ++j) acc += wc[j] * xi[j];
      logits.at(i, c) = acc;
    }
  };
  auto accuracy_of = [&](int which, const Mat<double>& weights) {
    int64_t total = 0, correct = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (split[static_cast<size_t>(i)] != which) continue;
      ++total;
      int best = 0;
      double best_v = -1e300;
      for (int c = 0; c < C; ++c) {
        double acc = weights.at(c, d);
        const double* wc = weights.row(c);
        const double* xi = x.row(i);
        for (int64_t j = 0; j < d; ++j) acc += wc[j] * xi[j];
        if (acc > best_v) {
          best_v = acc;
          best = c;
        }
      }
      if (best == labels[static_cast<size_t>(i)]) ++correct;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  };

  double best_valid = -1.0;
  const double inv_train = 1.0 / static_cast<double>(train_rows.size());
  for (int iter = 0; iter < hyper.iters; ++iter) {
    std::fill(grad.v.begin(), grad.v.end(), 0.0);
    for (const int64_t i : train_rows) {
      forward_row(i);
      // Softmax over the row, then (p - y) outer x.
      double mx = logits.at(i, 0);
      for (int c = 1; c < C; ++c) mx = std::max(mx, logits.at(i, c));
      double z = 0;
      for (int c = 0; c < C; ++c) z += std::exp(logits.at(i, c) - mx);
      const double invz = 1.0 / z;
      for (int c = 0; c < C; ++c) {
        double p = std::exp(logits.at(i, c) - mx) * invz;
        if (c == labels[static_cast<size_t>(i)]) p -= 1.0;
        p *= inv_train;
        double* gc = grad.row(c);
        const double* xi = x.row(i);
        for (int64_t j = 0; j < d; ++j) gc[j] += p * xi[j];
        gc[d] += p;
      }
    }
    for (int c = 0; c < C; ++c) {
      double* wc = w.row(c);
      const double* gc = grad.row(c);
      for (int64_t j = 0; j <= d; ++j)
        wc[j] -= hyper.lr * (gc[j] + hyper.l2 * wc[j]);
    }
    if ((iter + 1) % hyper.eval_every == 0 || iter + 1 == hyper.iters) {
      const double va = accuracy_of(1, w);
      if (va > best_valid) {
        best_valid = va;
        best_w = w;
      }
    }
  }

  ProbeResult r;
  r.num_classes = C;
  r.chance = 1.0 / C;
  r.train_accuracy = accuracy_of(0, best_w);
  r.valid_accuracy = accuracy_of(1, best_w);
  r.test_accuracy = accuracy_of(2, best_w);
  return r;
}

ModelHandle::ModelHandle(AnyCheckpoint ckpt) : ckpt_(std::move(ckpt)) {}

const ModelConfig& ModelHandle::config() const { return checkpoint_config(ckpt_); }

int ModelHandle::input_dim() const {
  return std::visit([](const auto& c) { return c.params.input_dim; }, ckpt_);
}

int64_t ModelHandle::step() const { return checkpoint_step(ckpt_); }

int ModelHandle::num_probe_layers() const {
  const auto& cfg = config();
  return cfg.num_encoder_layers + 1 + cfg.predictor_layers;
}

const char* ModelHandle::stage_of(int layer) const {
  const auto& cfg = config();
  if (layer == 0) return "input";
  if (layer <= cfg.num_encoder_layers) return "encoder";
  return "predictor";
}

std::vector<Mat<float>> ModelHandle::layer_reps(const Utterance& u) const {
  return std::visit(
      [&](const auto& ckpt) {
        using Real = typename std::decay_t<decltype(ckpt.params.bufs[0].data)>::value_type;
        Tape<Real> tape;
        auto leaves = register_params(tape, ckpt.params, /*requires_grad=*/false);
        const auto enc = encode(tape, u.frames, nullptr, leaves, {});
        const auto neutral = neutral_speaker_embedding(ckpt.params);
        const auto pred = predict_with_embedding(
            tape, enc.encoder.back(), std::span<const Real>(neutral), leaves);
        std::vector<Mat<float>> out;
        out.reserve(enc.encoder.size() + pred.layers.size());
        auto push = [&](Tensor<Real> t) {
          const auto v = tape.value(t);
          Mat<float> m(t.rows(), t.cols());
          for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = static_cast<float>(v[i]);
          out.push_back(std::move(m));
        };
        for (const auto& t : enc.encoder) push(t);
        for (const auto& t : pred.layers) push(t);
        return out;
      },
      ckpt_);
}

namespace {

int split_code(Split s) { return static_cast<int>(s); }

// Mean-pooled per-utterance features from per-layer reps.
Mat<double> pool_rows(const Mat<float>& m) {
  Mat<double> out(1, m.cols);
  for (int64_t t = 0; t < m.rows; ++t)
    for (int64_t j = 0; j < m.cols; ++j)
      out.at(0, j) += static_cast<double>(m.at(t, j));
  for (int64_t j = 0; j < m.cols; ++j) out.at(0, j) /= static_cast<double>(m.rows);
  return out;
}

}  // namespace

std::vector<ProbeResult> layerwise_sid_curve(const ModelHandle& model,
                                             const Corpus& corpus,
                                             const ProbeHyper& hyper) {
  const int layers = model.num_probe_layers();
  const int64_t n = static_cast<int64_t>(corpus.utterances.size());
  std::vector<Mat<double>> pooled(static_cast<size_t>(layers));
  for (auto& m : pooled) m = Mat<double>(n, model.config().model_dim);
  std::vector<int32_t> labels(static_cast<size_t>(n));
  std::vector<int> split(static_cast<size_t>(n));
  for (const auto& u : corpus.utterances) {
    const auto reps = model.layer_reps(u);
    for (int l = 0; l < layers; ++l) {
      const auto p = pool_rows(reps[static_cast<size_t>(l)]);
      std::copy(p.v.begin(), p.v.end(), pooled[static_cast<size_t>(l)].row(u.id));
    }
    labels[static_cast<size_t>(u.id)] = u.speaker.speaker_id;
    split[static_cast<size_t>(u.id)] = split_code(u.split);
  }
  std::vector<ProbeResult> out;
  out.reserve(static_cast<size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    ProbeResult r = linear_probe(pooled[static_cast<size_t>(l)], labels, split,
                                 corpus.config.num_speakers, hyper);
    r.layer = l;
    r.stage = model.stage_of(l);
    r.task = "sid";
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

// Gathers per-frame features of one layer, subsampling train frames.
void frame_probe_data(const Corpus& corpus,
                      const std::function<Mat<float>(const Utterance&)>& layer_of,
                      int64_t max_train_frames, uint64_t seed, Mat<double>* x,
                      std::vector<int32_t>* y, std::vector<int>* split) {
  int64_t train_total = 0;
  for (const auto& u : corpus.utterances)
    if (u.split == Split::kTrain) train_total += u.num_frames();
  double keep_frac = 1.0;
  if (train_total > max_train_frames)
    keep_frac = static_cast<double>(max_train_frames) / static_cast<double>(train_total);

  Rng rng(seed);
  std::vector<std::pair<int, int64_t>> rows;  // (utterance, frame)
  for (const auto& u : corpus.utterances) {
    for (int64_t t = 0; t < u.num_frames(); ++t) {
      if (u.split == Split::kTrain && keep_frac < 1.0 && !rng.bernoulli(keep_frac))
        continue;
      rows.emplace_back(u.id, t);
    }
  }
  const auto& first = corpus.utterances.front();
  const Mat<float> probe = layer_of(first);
  const int64_t dim = probe.cols;
  *x = Mat<double>(static_cast<int64_t>(rows.size()), dim);
  y->resize(rows.size());
  split->resize(rows.size());
  int64_t out_row = 0;
  int current = -1;
  Mat<float> feats;
  for (const auto& [uid, t] : rows) {
    if (uid != current) {
      feats = layer_of(corpus.utterances[static_cast<size_t>(uid)]);
      current = uid;
    }
    const Utterance& u = corpus.utterances[static_cast<size_t>(uid)];
    for (int64_t j = 0; j < dim; ++j)
      x->at(out_row, j) = static_cast<double>(feats.at(t, j));
    (*y)[static_cast<size_t>(out_row)] = u.phone_labels[static_cast<size_t>(t)];
    (*split)[static_cast<size_t>(out_row)] = split_code(u.split);
    ++out_row;
  }
}

}  // namespace

ProbeResult phone_probe(const ModelHandle& model, const Corpus& corpus, int layer,
                        const ProbeHyper& hyper, int64_t max_train_frames,
                        uint64_t seed) {
  VOXLAB_REQUIRE(layer >= 0 && layer < model.num_probe_layers(), IndexError,
                 "phone_probe: layer " << layer << " out of range");
  Mat<double> x;
  std::vector<int32_t> y;
  std::vector<int> split;
  frame_probe_data(
      corpus,
      [&](const Utterance& u) { return model.layer_reps(u)[static_cast<size_t>(layer)]; },
      max_train_frames, seed, &x, &y, &split);
  ProbeResult r = linear_probe(x, y, split, corpus.config.num_phones, hyper);
  r.layer = layer;
  r.stage = model.stage_of(layer);
  r.task = "phone";
  return r;
}

ProbeResult raw_frame_sid_probe(const Corpus& corpus, const ProbeHyper& hyper) {
  const int64_t n = static_cast<int64_t>(corpus.utterances.size());
  Mat<double> x(n, corpus.config.feat_dim);
  std::vector<int32_t> y(static_cast<size_t>(n));
  std::vector<int> split(static_cast<size_t>(n));
  for (const auto& u : corpus.utterances) {
    Mat<double> pooled(1, u.frames.cols);
    for (int64_t t = 0; t < u.frames.rows; ++t)
      for (int64_t j = 0; j < u.frames.cols; ++j)
        pooled.at(0, j) += static_cast<double>(u.frames.at(t, j));
    for (int64_t j = 0; j < u.frames.cols; ++j)
      x.at(u.id, j) = pooled.at(0, j) / static_cast<double>(u.frames.rows);
    y[static_cast<size_t>(u.id)] = u.speaker.speaker_id;
    split[static_cast<size_t>(u.id)] = split_code(u.split);
  }
  ProbeResult r = linear_probe(x, y, split, corpus.config.num_speakers, hyper);
  r.task = "sid";
  r.stage = "raw";
  return r;
}

ProbeResult raw_frame_phone_probe(const Corpus& corpus, const ProbeHyper& hyper,
                                  int64_t max_train_frames, uint64_t seed) {
  Mat<double> x;
  std::vector<int32_t> y;
  std::vector<int> split;
  frame_probe_data(
      corpus, [](const Utterance& u) { return u.frames; }, max_train_frames, seed,
      &x, &y, &split);
  ProbeResult r = linear_probe(x, y, split, corpus.config.num_phones, hyper);
  r.task = "phone";
  r.stage = "raw";
  return r;
}

ProbeResult speaker_probe_on_labels(const std::vector<std::vector<int32_t>>& labels,
                                    const Corpus& corpus, int num_clusters,
                                    const ProbeHyper& hyper) {
  VOXLAB_REQUIRE(labels.size() == corpus.utterances.size(), DimensionError,
                 "speaker_probe_on_labels: label set does not cover the corpus");
  const int64_t n = static_cast<int64_t>(corpus.utterances.size());
  Mat<double> x(n, num_clusters);
  std::vector<int32_t> y(static_cast<size_t>(n));
  std::vector<int> split(static_cast<size_t>(n));
  for (const auto& u : corpus.utterances) {
    const auto& seq = labels[static_cast<size_t>(u.id)];
    VOXLAB_REQUIRE(!seq.empty(), ContractError, "speaker_probe_on_labels: empty labels");
    for (const int32_t c : seq) {
      VOXLAB_REQUIRE(c >= 0 && c < num_clusters, IndexError,
                     "speaker_probe_on_labels: cluster id out of range");
      x.at(u.id, c) += 1.0;
    }
    for (int c = 0; c < num_clusters; ++c)
      x.at(u.id, c) /= static_cast<double>(seq.size());
    y[static_cast<size_t>(u.id)] = u.speaker.speaker_id;
    split[static_cast<size_t>(u.id)] = split_code(u.split);
  }
  ProbeResult r = linear_probe(x, y, split, corpus.config.num_speakers, hyper);
  r.task = "sid";
  r.stage = "labels";
  return r;
}

double pnmi(std::span<const int32_t> cluster_labels,
            std::span<const int32_t> phone_labels) {
  VOXLAB_REQUIRE(cluster_labels.size() == phone_labels.size(), DimensionError,
                 "pnmi: sequence lengths differ");
  VOXLAB_REQUIRE(!cluster_labels.empty(), ContractError, "pnmi: empty sequences");
  const double n = static_cast<double>(cluster_labels.size());
  std::map<int32_t, int64_t> phone_count;
  std::map<int32_t, std::map<int32_t, int64_t>> by_cluster;  // cluster -> phone -> n
  std::map<int32_t, int64_t> cluster_count;
  for (size_t i = 0; i < cluster_labels.size(); ++i) {
    ++phone_count[phone_labels[i]];
    ++cluster_count[cluster_labels[i]];
    ++by_cluster[cluster_labels[i]][phone_labels[i]];
  }
  double h_phone = 0;
  for (const auto& [ph, cnt] : phone_count) {
    const double p = static_cast<double>(cnt) / n;
    h_phone -= p * std::log(p);
  }
  VOXLAB_REQUIRE(h_phone > 0.0, ContractError,
                 "pnmi: phone labels have zero entropy (single class)");
  // H(P|C) = sum_c P(c) H(P|c); a pure cluster contributes exactly zero.
  double h_cond = 0;
  for (const auto& [c, phones] : by_cluster) {
    const double nc = static_cast<double>(cluster_count[c]);
    double h = 0;
    if (phones.size() > 1) {
      for (const auto& [ph, cnt] : phones) {
        const double p = static_cast<double>(cnt) / nc;
        h -= p * std::log(p);
      }
    }
    h_cond += (nc / n) * h;
  }
  const double ratio = (h_phone - h_cond) / h_phone;
  return std::clamp(ratio, 0.0, 1.0);
}

namespace {

Mat<double> reps_as_double(const Mat<float>& m) {
  Mat<double> out(m.rows, m.cols);
  for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = static_cast<double>(m.v[i]);
  return out;
}

}  // namespace

int best_layer_by_pnmi_features(
    const Corpus& corpus, const std::vector<std::vector<Mat<float>>>& layer_features,
    int K, uint64_t seed, int64_t fit_subsample) {
  VOXLAB_REQUIRE(!layer_features.empty(), ContractError,
                 "best_layer_by_pnmi: no layers");
  int best_layer = 1;
  double best = -1.0;
  for (int layer = 1; layer <= static_cast<int>(layer_features.size()); ++layer) {
    const auto& all = layer_features[static_cast<size_t>(layer - 1)];
    VOXLAB_REQUIRE(all.size() == corpus.utterances.size(), DimensionError,
                   "best_layer_by_pnmi: features do not cover the corpus");
    int64_t train_frames = 0;
    for (const auto& u : corpus.utterances)
      if (u.split == Split::kTrain) train_frames += u.num_frames();
    Rng rng(Rng(seed).child("layer", static_cast<uint64_t>(layer)).seed());
    const double keep = train_frames > fit_subsample
                            ? static_cast<double>(fit_subsample) / train_frames
                            : 1.0;
    const int64_t dim = all.front().cols;
    std::vector<double> fit_data;
    for (const auto& u : corpus.utterances) {
      if (u.split != Split::kTrain) continue;
      const auto& f = all[static_cast<size_t>(u.id)];
      for (int64_t t = 0; t < f.rows; ++t) {
        if (keep < 1.0 && !rng.bernoulli(keep)) continue;
        for (int64_t j = 0; j < dim; ++j)
          fit_data.push_back(static_cast<double>(f.at(t, j)));
      }
    }
    const int64_t fit_rows = static_cast<int64_t>(fit_data.size()) / dim;
    Mat<double> fit(fit_rows, dim, std::move(fit_data));
    if (fit.rows < K) continue;
    KmeansOptions opts;
    opts.seed = rng.child("kmeans").seed();
    const Codebook cb = kmeans_fit(fit, K, opts);

    std::vector<int32_t> clusters, phones;
    for (const auto& u : corpus.utterances) {
      if (u.split != Split::kValid) continue;
      const auto assign = kmeans_assign(reps_as_double(all[static_cast<size_t>(u.id)]), cb);
      clusters.insert(clusters.end(), assign.begin(), assign.end());
      phones.insert(phones.end(), u.phone_labels.begin(), u.phone_labels.end());
    }
    const double score = pnmi(clusters, phones);
    if (score > best) {  // strict: ties keep the lower layer
      best = score;
      best_layer = layer;
    }
  }
  return best_layer;
}

int best_layer_by_pnmi(const ModelHandle& model, const Corpus& corpus, int K,
                       uint64_t seed, int64_t fit_subsample) {
  const int L = model.config().num_encoder_layers;
  // One forward pass per utterance; keep encoder layers 1..L.
  std::vector<std::vector<Mat<float>>> layer_features(
      static_cast<size_t>(L), std::vector<Mat<float>>(corpus.utterances.size()));
  for (const auto& u : corpus.utterances) {
    auto reps = model.layer_reps(u);
    for (int l = 1; l <= L; ++l) {
      layer_features[static_cast<size_t>(l - 1)][static_cast<size_t>(u.id)] =
          std::move(reps[static_cast<size_t>(l)]);
    }
  }
  return best_layer_by_pnmi_features(corpus, layer_features, K, seed, fit_subsample);
}

QuantizedLabels quantize_model_layer(const ModelHandle& model, const Corpus& corpus,
                                     int layer, int K, uint64_t seed,
                                     int64_t fit_subsample) {
  VOXLAB_REQUIRE(layer >= 0 && layer < model.num_probe_layers(), IndexError,
                 "quantize_model_layer: layer out of range");
  std::vector<Mat<float>> all(corpus.utterances.size());
  for (const auto& u : corpus.utterances)
    all[static_cast<size_t>(u.id)] = model.layer_reps(u)[static_cast<size_t>(layer)];

  int64_t train_frames = 0;
  for (const auto& u : corpus.utterances)
    if (u.split == Split::kTrain) train_frames += u.num_frames();
  Rng rng(seed);
  const double keep = train_frames > fit_subsample
                          ? static_cast<double>(fit_subsample) / train_frames
                          : 1.0;
  std::vector<double> fit_data;
  const int64_t dim = model.config().model_dim;
  for (const auto& u : corpus.utterances) {
    if (u.split != Split::kTrain) continue;
    const auto& f = all[static_cast<size_t>(u.id)];
    for (int64_t t = 0; t < f.rows; ++t) {
      if (keep < 1.0 && !rng.bernoulli(keep)) continue;
      for (int64_t j = 0; j < dim; ++j)
        fit_data.push_back(static_cast<double>(f.at(t, j)));
    }
  }
  const int64_t fit_rows = static_cast<int64_t>(fit_data.size()) / dim;
  Mat<double> fit(fit_rows, dim, std::move(fit_data));
  KmeansOptions opts;
  opts.seed = rng.child("kmeans").seed();
  QuantizedLabels out;
  out.codebook = kmeans_fit(fit, K, opts);
  out.codebook.source["mode"] = "model_layer";
  out.codebook.source["layer"] = layer;
  out.labels.resize(corpus.utterances.size());
  for (const auto& u : corpus.utterances) {
    out.labels[static_cast<size_t>(u.id)] =
        kmeans_assign(reps_as_double(all[static_cast<size_t>(u.id)]), out.codebook);
  }
  return out;
}

double dtw_average_cost(const Mat<double>& cost) {
  const int64_t m = cost.rows;
  const int64_t n = cost.cols;
  VOXLAB_REQUIRE(m >= 1 && n >= 1, ContractError, "dtw: empty sequences");
  Mat<double> d(m, n);
  Mat<int32_t> len(m, n);
  d.at(0, 0) = cost.at(0, 0);
  len.at(0, 0) = 1;
  for (int64_t i = 1; i < m; ++i) {
    d.at(i, 0) = d.at(i - 1, 0) + cost.at(i, 0);
    len.at(i, 0) = static_cast<int32_t>(i + 1);
  }
  for (int64_t j = 1; j < n; ++j) {
    d.at(0, j) = d.at(0, j - 1) + cost.at(0, j);
    len.at(0, j) = static_cast<int32_t>(j + 1);
  }
  for (int64_t i = 1; i < m; ++i) {
    for (int64_t j = 1; j < n; ++j) {
      // Among equal-cost predecessors prefer the shortest path, so the
      // normalization below is well defined.
      double best = d.at(i - 1, j - 1);
      int32_t blen = len.at(i - 1, j - 1);
      if (d.at(i - 1, j) < best ||
          (d.at(i - 1, j) == best && len.at(i - 1, j) < blen)) {
        best = d.at(i - 1, j);
        blen = len.at(i - 1, j);
      }
      if (d.at(i, j - 1) < best ||
          (d.at(i, j - 1) == best && len.at(i, j - 1) < blen)) {
        best = d.at(i, j - 1);
        blen = len.at(i, j - 1);
      }
      d.at(i, j) = best + cost.at(i, j);
      len.at(i, j) = blen + 1;
    }
  }
  return d.at(m - 1, n - 1) / static_cast<double>(len.at(m - 1, n - 1));
}

double dtw_angular_distance(const Mat<double>& a, const Mat<double>& b) {
  VOXLAB_REQUIRE(a.cols == b.cols, DimensionError, "dtw_angular: dims differ");
  VOXLAB_REQUIRE(a.rows >= 1 && b.rows >= 1, ContractError,
                 "dtw_angular: empty segments");
  Mat<double> cost(a.rows, b.rows);
  for (int64_t i = 0; i < a.rows; ++i) {
    for (int64_t j = 0; j < b.rows; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (int64_t k = 0; k < a.cols; ++k) {
        dot += a.at(i, k) * b.at(j, k);
        na += a.at(i, k) * a.at(i, k);
        nb += b.at(j, k) * b.at(j, k);
      }
      const double den = std::max(std::sqrt(na) * std::sqrt(nb), kCosineEps);
      const double cs = std::clamp(dot / den, -1.0, 1.0);
      cost.at(i, j) = std::acos(cs) / kPi;
    }
  }
  return dtw_average_cost(cost);
}

double abx_score(std::span<const AbxTriplet> triplets) {
  VOXLAB_REQUIRE(!triplets.empty(), ContractError, "abx_score: no triplets");
  double score = 0;
  for (const auto& t : triplets) {
    const double da = dtw_angular_distance(t.x, t.a);
    const double db = dtw_angular_distance(t.x, t.b);
    if (da < db) {
      score += 1.0;
    } else if (da == db) {
      score += 0.5;
    }
  }
  return score / static_cast<double>(triplets.size());
}

namespace {

struct PhoneSpan {
  int utt_id;
  int speaker;
  int32_t phone;
  int64_t start;
  int64_t length;
};

Mat<double> slice_segment(const Mat<double>& feats, int64_t start, int64_t length) {
  Mat<double> out(length, feats.cols);
  for (int64_t t = 0; t < length; ++t)
    for (int64_t j = 0; j < feats.cols; ++j) out.at(t, j) = feats.at(start + t, j);
  return out;
}

}  // namespace

std::vector<AbxTriplet> build_abx_tasks(const Corpus& corpus,
                                        const std::vector<Mat<double>>& features,
                                        AbxMode mode, int num_triplets, uint64_t seed) {
  VOXLAB_REQUIRE(features.size() == corpus.utterances.size(), DimensionError,
                 "build_abx_tasks: features do not cover the corpus");
  // Phone spans of the test split, bucketed by (speaker, phone) and by phone.
  std::vector<PhoneSpan> spans;
  for (const auto& u : corpus.utterances) {
    if (u.split != Split::kTest) continue;
    int64_t pos = 0;
    for (size_t k = 0; k < u.tokens.size(); ++k) {
      spans.push_back({u.id, u.speaker.speaker_id, u.tokens[k], pos,
                       static_cast<int64_t>(u.durations[k])});
      pos += u.durations[k];
    }
  }
  VOXLAB_REQUIRE(!spans.empty(), ContractError, "build_abx_tasks: empty test split");

  std::map<std::pair<int, int32_t>, std::vector<size_t>> by_speaker_phone;
  std::map<int32_t, std::vector<size_t>> by_phone;
  for (size_t i = 0; i < spans.size(); ++i) {
    by_speaker_phone[{spans[i].speaker, spans[i].phone}].push_back(i);
    by_phone[spans[i].phone].push_back(i);
  }

  Rng rng(seed);
  std::vector<AbxTriplet> out;
  out.reserve(static_cast<size_t>(num_triplets));
  int attempts = 0;
  while (static_cast<int>(out.size()) < num_triplets) {
    VOXLAB_REQUIRE(++attempts < num_triplets * 200, ContractError,
                   "build_abx_tasks: not enough phone spans for the requested mode");
    const PhoneSpan& a = spans[static_cast<size_t>(rng.uniform_int(
        static_cast<int64_t>(spans.size())))];
    // b: different phone, same speaker as a.
    const PhoneSpan& b = spans[static_cast<size_t>(rng.uniform_int(
        static_cast<int64_t>(spans.size())))];
    if (b.speaker != a.speaker || b.phone == a.phone) continue;
    // x: same phone as a; within -> same speaker, cross -> different speaker.
    const auto& pool = mode == AbxMode::kWithin
                           ? by_speaker_phone[{a.speaker, a.phone}]
                           : by_phone[a.phone];
    if (pool.empty()) continue;
    const PhoneSpan& x = spans[pool[static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(pool.size())))]];
    if (mode == AbxMode::kWithin) {
      if (x.utt_id == a.utt_id && x.start == a.start) continue;  // same token
      if (x.speaker != a.speaker) continue;
    } else {
      if (x.speaker == a.speaker) continue;
    }
    AbxTriplet t;
    t.a = slice_segment(features[static_cast<size_t>(a.utt_id)], a.start, a.length);
    t.b = slice_segment(features[static_cast<size_t>(b.utt_id)], b.start, b.length);
    t.x = slice_segment(features[static_cast<size_t>(x.utt_id)], x.start, x.length);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<int32_t> rank_labels_by_group(const std::vector<std::vector<int32_t>>& labels,
                                          const Corpus& corpus, int num_clusters) {
  VOXLAB_REQUIRE(labels.size() == corpus.utterances.size(), DimensionError,
                 "rank_labels_by_group: label set does not cover the corpus");
  std::vector<int64_t> count_a(static_cast<size_t>(num_clusters), 0);
  std::vector<int64_t> count_b(static_cast<size_t>(num_clusters), 0);
  bool has_a = false, has_b = false;
  for (const auto& u : corpus.utterances) {
    auto& cnt = u.speaker.group == SpeakerGroup::kA ? count_a : count_b;
    (u.speaker.group == SpeakerGroup::kA ? has_a : has_b) = true;
    for (const int32_t c : labels[static_cast<size_t>(u.id)]) {
      VOXLAB_REQUIRE(c >= 0 && c < num_clusters, IndexError,
                     "rank_labels_by_group: cluster id out of range");
      ++cnt[static_cast<size_t>(c)];
    }
  }
  VOXLAB_REQUIRE(has_a && has_b, ContractError,
                 "rank_labels_by_group: both speaker groups must be present");
  std::vector<int32_t> order(static_cast<size_t>(num_clusters));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> ratio(static_cast<size_t>(num_clusters), 0.0);
  for (int c = 0; c < num_clusters; ++c) {
    const int64_t total = count_a[static_cast<size_t>(c)] + count_b[static_cast<size_t>(c)];
    ratio[static_cast<size_t>(c)] =
        total == 0 ? 0.0
                   : static_cast<double>(count_b[static_cast<size_t>(c)]) /
                         static_cast<double>(total);
  }
  std::stable_sort(order.begin(), order.end(), [&](int32_t lhs, int32_t rhs) {
    if (ratio[static_cast<size_t>(lhs)] != ratio[static_cast<size_t>(rhs)])
      return ratio[static_cast<size_t>(lhs)] < ratio[static_cast<size_t>(rhs)];
    return lhs < rhs;
  });
  std::vector<int32_t> rank(static_cast<size_t>(num_clusters));
  for (int i = 0; i < num_clusters; ++i)
    rank[static_cast<size_t>(order[static_cast<size_t>(i)])] = i;
  return rank;
}

double dtw_l0(std::span<const int32_t> seq_a, std::span<const int32_t> seq_b,
              std::span<const int32_t> rank_map) {
  VOXLAB_REQUIRE(!seq_a.empty() && !seq_b.empty(), ContractError,
                 "dtw_l0: empty sequences");
  auto rank_of = [&](int32_t c) {
    VOXLAB_REQUIRE(c >= 0 && c < static_cast<int32_t>(rank_map.size()), IndexError,
                   "dtw_l0: label " << c << " outside the rank map");
    return rank_map[static_cast<size_t>(c)];
  };
  Mat<double> cost(static_cast<int64_t>(seq_a.size()),
                   static_cast<int64_t>(seq_b.size()));
  for (size_t i = 0; i < seq_a.size(); ++i)
    for (size_t j = 0; j < seq_b.size(); ++j)
      cost.at(static_cast<int64_t>(i), static_cast<int64_t>(j)) =
          rank_of(seq_a[i]) == rank_of(seq_b[j]) ? 0.0 : 1.0;
  return dtw_average_cost(cost);
}

double mean_cross_group_dtw_l0(const Corpus& corpus,
                               const std::vector<std::vector<int32_t>>& labels,
                               std::span<const int32_t> rank_map, Split split,
                               int max_pairs, uint64_t seed) {
  std::map<int, std::vector<int>> a_by_content, b_by_content;
  for (const auto& u : corpus.utterances) {
    if (u.split != split) continue;
    if (u.speaker.group == SpeakerGroup::kA) {
      a_by_content[u.content_id].push_back(u.id);
    } else {
      b_by_content[u.content_id].push_back(u.id);
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [content, as] : a_by_content) {
    const auto it = b_by_content.find(content);
    if (it == b_by_content.end()) continue;
    for (const int ua : as)
      for (const int ub : it->second) pairs.emplace_back(ua, ub);
  }
  VOXLAB_REQUIRE(!pairs.empty(), ContractError,
                 "mean_cross_group_dtw_l0: no same-content cross-group pairs");
  if (static_cast<int>(pairs.size()) > max_pairs) {
    Rng rng(seed);
    for (int i = 0; i < max_pairs; ++i) {
      const int64_t j = i + rng.uniform_int(static_cast<int64_t>(pairs.size()) - i);
      std::swap(pairs[static_cast<size_t>(i)], pairs[static_cast<size_t>(j)]);
    }
    pairs.resize(static_cast<size_t>(max_pairs));
  }
  double total = 0;
  for (const auto& [ua, ub] : pairs) {
    total += dtw_l0(labels[static_cast<size_t>(ua)], labels[static_cast<size_t>(ub)],
                    rank_map);
  }
  return total / static_cast<double>(pairs.size());
}

double auto_bleu(std::span<const int32_t> seq, int k) {
  VOXLAB_REQUIRE(k >= 1, ContractError, "auto_bleu: k must be >= 1");
  VOXLAB_REQUIRE(static_cast<int>(seq.size()) >= k, ContractError,
                 "auto_bleu: sequence shorter than k");
  std::map<std::vector<int32_t>, int> counts;
  const size_t n_grams = seq.size() - static_cast<size_t>(k) + 1;
  for (size_t i = 0; i < n_grams; ++i) {
    std::vector<int32_t> g(seq.begin() + static_cast<std::ptrdiff_t>(i),
                           seq.begin() + static_cast<std::ptrdiff_t>(i + static_cast<size_t>(k)));
    ++counts[g];
  }
  int64_t repeated = 0;
  for (size_t i = 0; i < n_grams; ++i) {
    std::vector<int32_t> g(seq.begin() + static_cast<std::ptrdiff_t>(i),
                           seq.begin() + static_cast<std::ptrdiff_t>(i + static_cast<size_t>(k)));
    if (counts[g] >= 2) ++repeated;
  }
  return static_cast<double>(repeated) / static_cast<double>(n_grams);
}

}  // namespace voxlab
