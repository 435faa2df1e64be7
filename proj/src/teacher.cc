// voxlab/teacher.cc

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

#include "voxlab/teacher.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "voxlab/rng.h"

namespace voxlab {

namespace fs = std::filesystem;

namespace {

double sq_dist(const double* a, const double* b, int64_t d) {
  double acc = 0;
  for (int64_t j = 0; j < d; ++j) {
    const double c = a[j] - b[j];
    acc += c * c;
  }
  return acc;
}

// Nearest center, lowest id wins ties.
int32_t nearest_center(const double* x, const Mat<double>& centers) {
  int32_t best = 0;
  double best_d = sq_dist(x, centers.row(0), centers.cols);
  for (int64_t c = 1; c < centers.rows; ++c) {
    const double d = sq_dist(x, centers.row(c), centers.cols);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int32_t>(c);
    }
  }
  return best;
}

}  // namespace

Codebook kmeans_fit(const Mat<double>& features, int K, const KmeansOptions& opts) {
  const int64_t n = features.rows;
  const int64_t d = features.cols;
  VOXLAB_REQUIRE(K >= 2, ContractError, "kmeans_fit: K must be >= 2, got " << K);
  VOXLAB_REQUIRE(n >= K, ContractError,
                 "kmeans_fit: need at least K=" << K << " points, got " << n);

  Rng rng(opts.seed);
  Codebook cb;
  cb.K = K;
  cb.dim = static_cast<int>(d);
  cb.centers = Mat<double>(K, d);

  // k-means++ seeding.
  {
    std::vector<double> d2(static_cast<size_t>(n), 0.0);
    const int64_t first = rng.uniform_int(n);
    std::copy(features.row(first), features.row(first) + d, cb.centers.row(0));
    for (int c = 1; c < K; ++c) {
      double total = 0;
      for (int64_t i = 0; i < n; ++i) {
        double best = sq_dist(features.row(i), cb.centers.row(0), d);
        for (int cc = 1; cc < c; ++cc)
          best = std::min(best, sq_dist(features.row(i), cb.centers.row(cc), d));
        d2[static_cast<size_t>(i)] = best;
        total += best;
      }
      int64_t pick;
      if (total <= 0) {
        pick = rng.uniform_int(n);  // all mass on existing centers
      } else {
        double r = rng.uniform() * total;
        pick = n - 1;
        for (int64_t i = 0; i < n; ++i) {
          r -= d2[static_cast<size_t>(i)];
          if (r <= 0) {
            pick = i;
            break;
          }
        }
      }
      std::copy(features.row(pick), features.row(pick) + d, cb.centers.row(c));
    }
  }

  std::vector<int32_t> assign(static_cast<size_t>(n), -1);
  std::vector<double> dist(static_cast<size_t>(n), 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(K), 0);
  Mat<double> sums(K, d);

  double prev_inertia = -1.0;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // Assignment step; inertia is measured here with the current centers.
    bool changed = false;
    double inertia = 0;
    for (int64_t i = 0; i < n; ++i) {
      const int32_t c = nearest_center(features.row(i), cb.centers);
      dist[static_cast<size_t>(i)] = sq_dist(features.row(i), cb.centers.row(c), d);
      inertia += dist[static_cast<size_t>(i)];
      if (c != assign[static_cast<size_t>(i)]) {
        assign[static_cast<size_t>(i)] = c;
        changed = true;
      }
    }
    cb.inertia_trace.push_back(inertia);
    cb.inertia = inertia;

    const bool converged =
        prev_inertia >= 0 &&
        std::fabs(prev_inertia - inertia) <= opts.tol * std::max(prev_inertia, 1e-300);
    prev_inertia = inertia;

    // Update step.
    std::fill(counts.begin(), counts.end(), 0);
    std::fill(sums.v.begin(), sums.v.end(), 0.0);
    for (int64_t i = 0; i < n; ++i) {
      const int32_t c = assign[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(c)];
      const double* xi = features.row(i);
      double* sc = sums.row(c);
      for (int64_t j = 0; j < d; ++j) sc[j] += xi[j];
    }
    for (int c = 0; c < K; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        const double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(c)]);
        double* cc = cb.centers.row(c);
        const double* sc = sums.row(c);
        for (int64_t j = 0; j < d; ++j) cc[j] = sc[j] * inv;
      } else {
        // Reseed an empty cluster from the farthest point.
        int64_t far = 0;
        for (int64_t i = 1; i < n; ++i)
          if (dist[static_cast<size_t>(i)] > dist[static_cast<size_t>(far)]) far = i;
        std::copy(features.row(far), features.row(far) + d, cb.centers.row(c));
        dist[static_cast<size_t>(far)] = 0.0;
        ++cb.empty_reseeds;
      }
    }
    if (!changed || converged) break;
  }
  return cb;
}

std::vector<int32_t> kmeans_assign(const Mat<double>& features, const Codebook& cb) {
  VOXLAB_REQUIRE(features.cols == cb.centers.cols, ContractError,
                 "kmeans_assign: feature dim " << features.cols
                                               << " != codebook dim " << cb.dim);
  std::vector<int32_t> out(static_cast<size_t>(features.rows));
  for (int64_t i = 0; i < features.rows; ++i)
    out[static_cast<size_t>(i)] = nearest_center(features.row(i), cb.centers);
  return out;
}

Utterance normalize_speaker(const Utterance& u, const SpeakerParams& reference,
                            const PhoneInventory& inventory, double beta) {
  VOXLAB_REQUIRE(beta >= 0.0 && beta <= 1.0, ContractError,
                 "normalize_speaker: beta must be in [0,1], got " << beta);
  const int feat_dim = static_cast<int>(u.frames.cols);
  VOXLAB_REQUIRE(static_cast<int>(reference.eq_curve.size()) == feat_dim,
                 DimensionError, "normalize_speaker: reference EQ length mismatch");
  auto log_interp = [beta](double orig, double ref) {
    return std::exp((1.0 - beta) * std::log(orig) + beta * std::log(ref));
  };
  Utterance out = u;
  out.speaker.formant_scale = log_interp(u.speaker.formant_scale, reference.formant_scale);
  out.speaker.f0_base = log_interp(u.speaker.f0_base, reference.f0_base);
  for (int b = 0; b < feat_dim; ++b) {
    out.speaker.eq_curve[static_cast<size_t>(b)] =
        log_interp(u.speaker.eq_curve[static_cast<size_t>(b)],
                   reference.eq_curve[static_cast<size_t>(b)]);
  }
  out.frames = render_frames(out.tokens, out.durations, inventory, feat_dim,
                             out.speaker.formant_scale, out.speaker.f0_base,
                             out.speaker.eq_curve, 0.0, nullptr);
  return out;
}

const SpeakerParams& choose_reference_speaker(const Corpus& corpus) {
  const auto& speakers = corpus.speakers;
  VOXLAB_REQUIRE(!speakers.empty(), ContractError, "no speakers in corpus");
  std::vector<double> ls, f0;
  for (const auto& sp : speakers) {
    ls.push_back(std::log(sp.formant_scale));
    f0.push_back(sp.f0_base);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double med_ls = median(ls);
  const double med_f0 = median(f0);
  const double range_ls =
      std::max(1e-9, *std::max_element(ls.begin(), ls.end()) -
                         *std::min_element(ls.begin(), ls.end()));
  const double range_f0 =
      std::max(1e-9, *std::max_element(f0.begin(), f0.end()) -
                         *std::min_element(f0.begin(), f0.end()));
  size_t best = 0;
  double best_d = 1e300;
  for (size_t i = 0; i < speakers.size(); ++i) {
    const double d = std::fabs(ls[i] - med_ls) / range_ls +
                     std::fabs(f0[i] - med_f0) / range_f0;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return speakers[best];
}

const char* teacher_mode_name(TeacherMode m) {
  switch (m) {
    case TeacherMode::kRawFrames:
      return "raw_frames";
    case TeacherMode::kNormalizedFrames:
      return "normalized_frames";
    case TeacherMode::kModelLayer:
      return "model_layer";
  }
  return "raw_frames";
}

TeacherMode teacher_mode_from_name(const std::string& name) {
  if (name == "raw_frames" || name == "raw") return TeacherMode::kRawFrames;
  if (name == "normalized_frames" || name == "normalized")
    return TeacherMode::kNormalizedFrames;
  if (name == "model_layer") return TeacherMode::kModelLayer;
  VOXLAB_THROW(ConfigError, "unknown teacher mode: " << name
                            << " (expected raw_frames, normalized_frames, model_layer)");
}

namespace {

Mat<double> frames_as_double(const Mat<float>& f) {
  Mat<double> out(f.rows, f.cols);
  for (size_t i = 0; i < f.v.size(); ++i) out.v[i] = static_cast<double>(f.v[i]);
  return out;
}

}  // namespace

TeacherSet generate_teacher_labels(const Corpus& corpus, const TeacherConfig& config,
                                   const UtteranceFeatureFn& feature_fn) {
  VOXLAB_REQUIRE(config.K >= 2, ConfigError, "teacher.K: must be >= 2");
  if (config.mode == TeacherMode::kModelLayer) {
    VOXLAB_REQUIRE(feature_fn != nullptr, ContractError,
                   "generate_teacher_labels: model_layer mode requires a trained "
                   "checkpoint feature source");
  } else {
    VOXLAB_REQUIRE(feature_fn == nullptr, ContractError,
                   "generate_teacher_labels: feature source is only valid in "
                   "model_layer mode");
  }

  const SpeakerParams& reference = choose_reference_speaker(corpus);
  const bool normalize = config.mode != TeacherMode::kRawFrames;

  auto features_of = [&](const Utterance& u) -> Mat<double> {
    if (config.mode == TeacherMode::kRawFrames) return frames_as_double(u.frames);
    const Utterance conv =
        normalize_speaker(u, reference, corpus.inventory, config.normalize_beta);
    if (config.mode == TeacherMode::kNormalizedFrames)
      return frames_as_double(conv.frames);
    return feature_fn(conv);
  };

  // Fit on a uniform subsample of train frames.
  const auto train_ids = corpus.utterance_ids(Split::kTrain);
  VOXLAB_REQUIRE(!train_ids.empty(), ContractError, "corpus has no train split");
  std::vector<Mat<double>> train_feats;
  train_feats.reserve(train_ids.size());
  int64_t total_frames = 0;
  for (const int id : train_ids) {
    train_feats.push_back(features_of(corpus.utterances[static_cast<size_t>(id)]));
    total_frames += train_feats.back().rows;
  }
  const int64_t dim = train_feats.front().cols;

  Rng rng(config.seed);
  std::vector<int64_t> keep;
  if (total_frames > config.fit_subsample) {
    // Uniform without replacement over the global frame index.
    std::vector<int64_t> all(static_cast<size_t>(total_frames));
    for (int64_t i = 0; i < total_frames; ++i) all[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < config.fit_subsample; ++i) {
      const int64_t j = i + rng.uniform_int(total_frames - i);
      std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
    }
    keep.assign(all.begin(), all.begin() + config.fit_subsample);
    std::sort(keep.begin(), keep.end());
  } else {
    keep.resize(static_cast<size_t>(total_frames));
    for (int64_t i = 0; i < total_frames; ++i) keep[static_cast<size_t>(i)] = i;
  }

  Mat<double> fit(static_cast<int64_t>(keep.size()), dim);
  {
    size_t ki = 0;
    int64_t base = 0;
    for (const auto& f : train_feats) {
      while (ki < keep.size() && keep[ki] < base + f.rows) {
        const int64_t local = keep[ki] - base;
        std::copy(f.row(local), f.row(local) + dim, fit.row(static_cast<int64_t>(ki)));
        ++ki;
      }
      base += f.rows;
    }
  }

  KmeansOptions opts;
  opts.seed = rng.child("kmeans").seed();
  TeacherSet ts;
  ts.config = config;
  ts.codebook = kmeans_fit(fit, config.K, opts);
  ts.codebook.source["mode"] = teacher_mode_name(config.mode);
  ts.codebook.source["normalize_beta"] = normalize ? config.normalize_beta : 0.0;
  ts.codebook.source["reference_speaker"] = reference.speaker_id;
  ts.codebook.source["seed"] = static_cast<int64_t>(config.seed);
  if (config.mode == TeacherMode::kModelLayer)
    ts.codebook.source["model_layer"] = config.model_layer;

  ts.labels.resize(corpus.utterances.size());
  for (const auto& u : corpus.utterances) {
    ts.labels[static_cast<size_t>(u.id)] = kmeans_assign(features_of(u), ts.codebook);
  }

  uint64_t h = fnv1a64(ts.codebook.centers.v.data(),
                       ts.codebook.centers.v.size() * sizeof(double));
  for (const auto& l : ts.labels) h = fnv1a64(l.data(), l.size() * sizeof(int32_t), h);
  ts.id = hex64(h);
  return ts;
}

void save_codebook(const Codebook& cb, const fs::path& path) {
  Json header;
  header["k"] = cb.K;
  header["dim"] = cb.dim;
  header["inertia"] = cb.inertia;
  header["empty_reseeds"] = cb.empty_reseeds;
  header["source"] = cb.source;
  header["dtype"] = "f64";
  write_blob(path, "VXCB1", header, cb.centers.v.data(),
             cb.centers.v.size() * sizeof(double));
}

Codebook load_codebook(const fs::path& path) {
  const BlobFile blob = read_blob(path, "VXCB1");
  JsonView v(blob.header, "codebook");
  Codebook cb;
  cb.K = static_cast<int>(v.get_int("k"));
  cb.dim = static_cast<int>(v.get_int("dim"));
  cb.inertia = v.get_double("inertia", 0.0);
  cb.empty_reseeds = static_cast<int>(v.get_int("empty_reseeds", 0));
  if (blob.header.contains("source")) cb.source = blob.header["source"];
  VOXLAB_REQUIRE(blob.payload.size() ==
                     static_cast<size_t>(cb.K) * static_cast<size_t>(cb.dim) * sizeof(double),
                 IoError, path.string() << ": payload size mismatch");
  cb.centers = Mat<double>(cb.K, cb.dim);
  std::memcpy(cb.centers.v.data(), blob.payload.data(), blob.payload.size());
  return cb;
}

void save_teacher_set(const TeacherSet& ts, uint64_t corpus_digest,
                      const fs::path& dir) {
  fs::create_directories(dir);
  save_codebook(ts.codebook, dir / "codebook.bin");

  Json entries = Json::array();
  std::vector<int32_t> flat;
  for (size_t i = 0; i < ts.labels.size(); ++i) {
    Json e;
    e["utterance"] = static_cast<int64_t>(i);
    e["offset"] = static_cast<int64_t>(flat.size());
    e["length"] = static_cast<int64_t>(ts.labels[i].size());
    entries.push_back(std::move(e));
    flat.insert(flat.end(), ts.labels[i].begin(), ts.labels[i].end());
  }
  Json header;
  header["k"] = ts.config.K;
  header["entries"] = std::move(entries);
  header["corpus_digest"] = hex64(corpus_digest);
  write_blob(dir / "labels.bin", "VXTL1", header, flat.data(),
             flat.size() * sizeof(int32_t));

  Json manifest;
  manifest["format"] = "voxlab-teachers";
  manifest["version"] = 1;
  manifest["mode"] = teacher_mode_name(ts.config.mode);
  manifest["k"] = ts.config.K;
  manifest["normalize_beta"] = ts.config.normalize_beta;
  manifest["model_layer"] = ts.config.model_layer;
  manifest["seed"] = static_cast<int64_t>(ts.config.seed);
  manifest["fit_subsample"] = ts.config.fit_subsample;
  manifest["corpus_digest"] = hex64(corpus_digest);
  manifest["id"] = ts.id;
  save_json_file(dir / "teacher_manifest.json", manifest);
}

TeacherSet load_teacher_set(const fs::path& dir,
                            std::optional<uint64_t> expect_corpus_digest) {
  const Json manifest = load_json_file(dir / "teacher_manifest.json");
  JsonView v(manifest, "teacher_manifest");
  VOXLAB_REQUIRE(v.get_string("format", "") == "voxlab-teachers", ConfigError,
                 dir.string() << ": not a teacher directory");
  TeacherSet ts;
  ts.config.mode = teacher_mode_from_name(v.get_string("mode"));
  ts.config.K = static_cast<int>(v.get_int("k"));
  ts.config.normalize_beta = v.get_double("normalize_beta", 1.0);
  ts.config.model_layer = static_cast<int>(v.get_int("model_layer", -1));
  ts.config.seed = static_cast<uint64_t>(v.get_int("seed", 1));
  ts.config.fit_subsample = v.get_int("fit_subsample", 50000);
  ts.id = v.get_string("id");

  if (expect_corpus_digest.has_value()) {
    VOXLAB_REQUIRE(v.get_string("corpus_digest") == hex64(*expect_corpus_digest),
                   ConfigError,
                   dir.string() << ": teacher labels were built for a different corpus");
  }

  ts.codebook = load_codebook(dir / "codebook.bin");
  const BlobFile blob = read_blob(dir / "labels.bin", "VXTL1");
  const auto* data = reinterpret_cast<const int32_t*>(blob.payload.data());
  const int64_t total = static_cast<int64_t>(blob.payload.size() / sizeof(int32_t));
  const auto& entries = blob.header.at("entries");
  ts.labels.resize(entries.size());
  for (const auto& e : entries) {
    const auto idx = e.at("utterance").get<size_t>();
    const auto offset = e.at("offset").get<int64_t>();
    const auto length = e.at("length").get<int64_t>();
    VOXLAB_REQUIRE(offset + length <= total, IoError,
                   dir.string() << ": labels.bin out of bounds");
    ts.labels[idx].assign(data + offset, data + offset + length);
  }
  return ts;
}

}  // namespace voxlab
