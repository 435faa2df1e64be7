// voxlab/corpus.cc

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

#include "voxlab/corpus.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace voxlab {

namespace fs = std::filesystem;

void CorpusConfig::validate() const {
  VOXLAB_REQUIRE(num_phones >= 2, ConfigError,
                 "corpus.num_phones: must be >= 2, got " << num_phones);
  VOXLAB_REQUIRE(num_speakers >= 2, ConfigError,
                 "corpus.num_speakers: must be >= 2, got " << num_speakers);
  VOXLAB_REQUIRE(feat_dim >= 8, ConfigError,
                 "corpus.feat_dim: must be >= 8, got " << feat_dim);
  VOXLAB_REQUIRE(min_dur >= 1, ConfigError,
                 "corpus.min_dur: must be >= 1, got " << min_dur);
  VOXLAB_REQUIRE(max_dur >= min_dur, ConfigError,
                 "corpus.max_dur: must be >= min_dur, got " << max_dur << " < "
                                                            << min_dur);
  VOXLAB_REQUIRE(noise_std >= 0.0, ConfigError,
                 "corpus.noise_std: must be >= 0, got " << noise_std);
  VOXLAB_REQUIRE(tokens_per_utterance >= 1, ConfigError,
                 "corpus.tokens_per_utterance: must be >= 1");
  VOXLAB_REQUIRE(valid_per_speaker >= 1 && test_per_speaker >= 1, ConfigError,
                 "corpus: valid_per_speaker and test_per_speaker must be >= 1");
  VOXLAB_REQUIRE(
      utterances_per_speaker > valid_per_speaker + test_per_speaker, ConfigError,
      "corpus.utterances_per_speaker: must exceed valid+test per speaker");
  VOXLAB_REQUIRE(held_out_content >= 1, ConfigError,
                 "corpus.held_out_content: must be >= 1");
  VOXLAB_REQUIRE(content_pool_size > held_out_content, ConfigError,
                 "corpus.content_pool_size: must exceed held_out_content");
}

CorpusConfig CorpusConfig::from_json(const JsonView& v) {
  CorpusConfig c;
  c.num_phones = static_cast<int>(v.get_int("num_phones", c.num_phones));
  c.feat_dim = static_cast<int>(v.get_int("feat_dim", c.feat_dim));
  c.num_speakers = static_cast<int>(v.get_int("num_speakers", c.num_speakers));
  c.utterances_per_speaker =
      static_cast<int>(v.get_int("utterances_per_speaker", c.utterances_per_speaker));
  c.min_dur = static_cast<int>(v.get_int("min_dur", c.min_dur));
  c.max_dur = static_cast<int>(v.get_int("max_dur", c.max_dur));
  c.noise_std = v.get_double("noise_std", c.noise_std);
  c.rng_seed = static_cast<uint64_t>(v.get_int("rng_seed", static_cast<int64_t>(c.rng_seed)));
  c.tokens_per_utterance =
      static_cast<int>(v.get_int("tokens_per_utterance", c.tokens_per_utterance));
  c.valid_per_speaker =
      static_cast<int>(v.get_int("valid_per_speaker", c.valid_per_speaker));
  c.test_per_speaker =
      static_cast<int>(v.get_int("test_per_speaker", c.test_per_speaker));
  c.content_pool_size =
      static_cast<int>(v.get_int("content_pool_size", c.content_pool_size));
  c.held_out_content =
      static_cast<int>(v.get_int("held_out_content", c.held_out_content));
  c.validate();
  return c;
}

Json CorpusConfig::to_json() const {
  Json j;
  j["num_phones"] = num_phones;
  j["feat_dim"] = feat_dim;
  j["num_speakers"] = num_speakers;
  j["utterances_per_speaker"] = utterances_per_speaker;
  j["min_dur"] = min_dur;
  j["max_dur"] = max_dur;
  j["noise_std"] = noise_std;
  j["rng_seed"] = static_cast<int64_t>(rng_seed);
  j["tokens_per_utterance"] = tokens_per_utterance;
  j["valid_per_speaker"] = valid_per_speaker;
  j["test_per_speaker"] = test_per_speaker;
  j["content_pool_size"] = content_pool_size;
  j["held_out_content"] = held_out_content;
  return j;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  VOXLAB_THROW(ConfigError, "unknown split name: " << name);
}

std::vector<int> Corpus::utterance_ids(Split split) const {
  std::vector<int> ids;
  for (const auto& u : utterances) {
    if (u.split == split) ids.push_back(u.id);
  }
  return ids;
}

const SpeakerParams& Corpus::speaker(int id) const {
  VOXLAB_REQUIRE(id >= 0 && id < static_cast<int>(speakers.size()), IndexError,
                 "speaker id " << id << " out of range");
  return speakers[static_cast<size_t>(id)];
}

std::vector<double> sample_eq_curve(int feat_dim, Rng& rng) {
  // Three cosine components with random amplitude and phase; exp keeps the
  // gains positive and roughly centered at 1.
  double a[3], phi[3];
  for (int j = 0; j < 3; ++j) {
    a[j] = rng.uniform(-0.25, 0.25);
    phi[j] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  }
  std::vector<double> eq(static_cast<size_t>(feat_dim));
  for (int b = 0; b < feat_dim; ++b) {
    const double x = (b + 0.5) / feat_dim;
    double s = 0;
    for (int j = 0; j < 3; ++j)
      s += a[j] * std::cos((j + 1) * 3.14159265358979323846 * x + phi[j]);
    eq[static_cast<size_t>(b)] = std::clamp(std::exp(s), kEqGainLo, kEqGainHi);
  }
  return eq;
}

PhoneInventory build_inventory(const CorpusConfig& config, Rng& rng) {
  config.validate();
  PhoneInventory inv;
  inv.phones.reserve(static_cast<size_t>(config.num_phones));
  const int formants = 3;
  int attempts = 0;
  while (static_cast<int>(inv.phones.size()) < config.num_phones) {
    VOXLAB_REQUIRE(++attempts < 100000, ContractError,
                   "build_inventory: cannot place " << config.num_phones
                                                    << " distinct phones");
    Phone p;
    p.positions.resize(formants);
    for (int f = 0; f < formants; ++f)
      p.positions[static_cast<size_t>(f)] = rng.uniform(kFormantLo, kFormantHi);
    std::sort(p.positions.begin(), p.positions.end());
    bool ok = true;
    for (int f = 1; f < formants && ok; ++f) {
      if (p.positions[static_cast<size_t>(f)] - p.positions[static_cast<size_t>(f - 1)] <
          kFormantSep)
        ok = false;
    }
    if (!ok) continue;
    // Keep prototypes pairwise distinct with a margin.
    for (const auto& q : inv.phones) {
      double dist = 0;
      for (int f = 0; f < formants; ++f)
        dist = std::max(dist, std::fabs(p.positions[static_cast<size_t>(f)] -
                                        q.positions[static_cast<size_t>(f)]));
      if (dist < kPhoneMinDist) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    p.amps.resize(formants);
    for (int f = 0; f < formants; ++f)
      p.amps[static_cast<size_t>(f)] = rng.uniform(0.6, 1.0);
    inv.phones.push_back(std::move(p));
  }
  return inv;
}

SpeakerParams sample_speaker(const CorpusConfig& config, Rng& rng,
                             SpeakerGroup group, int speaker_id) {
  SpeakerParams sp;
  sp.speaker_id = speaker_id;
  sp.group = group;
  sp.formant_scale = rng.uniform(1.0, kMaxVoiceScale);
  if (rng.bernoulli(0.5)) sp.formant_scale = 1.0 / sp.formant_scale;
  if (group == SpeakerGroup::kA) {
    sp.f0_base = rng.uniform(kGroupAF0Lo, kGroupAF0Hi);
  } else {
    sp.f0_base = rng.uniform(kGroupBF0Lo, kGroupBF0Hi);
  }
  sp.eq_curve = sample_eq_curve(config.feat_dim, rng);
  return sp;
}

std::vector<int32_t> frame_labels(std::span<const int32_t> tokens,
                                  std::span<const int32_t> durations) {
  VOXLAB_REQUIRE(tokens.size() == durations.size(), DimensionError,
                 "frame_labels: " << tokens.size() << " tokens vs "
                                  << durations.size() << " durations");
  std::vector<int32_t> labels;
  for (size_t i = 0; i < tokens.size(); ++i) {
    VOXLAB_REQUIRE(durations[i] >= 1, ContractError,
                   "frame_labels: duration must be >= 1");
    for (int32_t k = 0; k < durations[i]; ++k) labels.push_back(tokens[i]);
  }
  return labels;
}

Mat<float> render_frames(std::span<const int32_t> tokens,
                         std::span<const int32_t> durations,
                         const PhoneInventory& inventory, int feat_dim,
                         double formant_scale, double f0_base,
                         std::span<const double> eq_curve, double noise_std,
                         Rng* rng) {
  VOXLAB_REQUIRE(static_cast<int>(eq_curve.size()) == feat_dim, DimensionError,
                 "render_frames: eq curve length " << eq_curve.size()
                                                   << " != feat_dim " << feat_dim);
  VOXLAB_REQUIRE(noise_std == 0.0 || rng != nullptr, ContractError,
                 "render_frames: rng required when noise_std > 0");
  const auto labels = frame_labels(tokens, durations);
  const int64_t T = static_cast<int64_t>(labels.size());
  Mat<float> frames(T, feat_dim);
  const double inv2sf = 1.0 / (2.0 * kFormantBumpWidth * kFormantBumpWidth);
  const double inv2sp = 1.0 / (2.0 * kPitchBumpWidth * kPitchBumpWidth);
  for (int64_t t = 0; t < T; ++t) {
    const Phone& ph = inventory.phones[static_cast<size_t>(labels[static_cast<size_t>(t)])];
    for (int b = 0; b < feat_dim; ++b) {
      const double x = (b + 0.5) / feat_dim;
      double v = 0;
      for (size_t f = 0; f < ph.positions.size(); ++f) {
        const double c = ph.positions[f] * formant_scale;
        const double d = x - c;
        v += ph.amps[f] * std::exp(-d * d * inv2sf);
      }
      const double dp = x - f0_base;
      v += kPitchAmp * std::exp(-dp * dp * inv2sp);
      v *= eq_curve[static_cast<size_t>(b)];
      if (noise_std > 0.0) v += noise_std * rng->gaussian();
      frames.at(t, b) = static_cast<float>(v);
    }
  }
  return frames;
}

namespace {

// Every phone must occur in the non-held-out part of the pool so probes can
// train on all classes; patch any missing phone into a deterministic slot.
void ensure_phone_coverage(std::vector<std::vector<int32_t>>& pool,
                           int held_out_content, int num_phones) {
  std::set<int32_t> seen;
  for (size_t s = static_cast<size_t>(held_out_content); s < pool.size(); ++s)
    for (const int32_t tok : pool[s]) seen.insert(tok);
  int slot = 0;
  for (int32_t ph = 0; ph < num_phones; ++ph) {
    if (seen.count(ph)) continue;
    const size_t seq = static_cast<size_t>(held_out_content) +
                       static_cast<size_t>(slot) % (pool.size() - static_cast<size_t>(held_out_content));
    const size_t pos = static_cast<size_t>(slot) % pool[seq].size();
    pool[seq][pos] = ph;
    ++slot;
  }
}

}  // namespace

Corpus build_corpus(const CorpusConfig& config) {
  config.validate();
  Rng root(config.rng_seed);

  Corpus corpus;
  corpus.config = config;
  Rng inv_rng = root.child("inventory");
  corpus.inventory = build_inventory(config, inv_rng);

  corpus.speakers.reserve(static_cast<size_t>(config.num_speakers));
  for (int s = 0; s < config.num_speakers; ++s) {
    const SpeakerGroup group =
        (s < config.num_speakers / 2) ? SpeakerGroup::kA : SpeakerGroup::kB;
    Rng srng = root.child("speaker", static_cast<uint64_t>(s));
    corpus.speakers.push_back(sample_speaker(config, srng, group, s));
  }

  Rng crng = root.child("content");
  corpus.content_pool.resize(static_cast<size_t>(config.content_pool_size));
  for (auto& seq : corpus.content_pool) {
    seq.resize(static_cast<size_t>(config.tokens_per_utterance));
    int32_t prev = -1;
    for (auto& tok : seq) {
      int32_t t;
      do {
        t = static_cast<int32_t>(crng.uniform_int(config.num_phones));
      } while (t == prev && config.num_phones > 1);
      tok = t;
      prev = t;
    }
  }
  ensure_phone_coverage(corpus.content_pool, config.held_out_content,
                        config.num_phones);

  const int train_count =
      config.utterances_per_speaker - config.valid_per_speaker - config.test_per_speaker;
  int uid = 0;
  for (int s = 0; s < config.num_speakers; ++s) {
    const SpeakerParams& sp = corpus.speakers[static_cast<size_t>(s)];
    Rng arng = root.child("assign", static_cast<uint64_t>(s));
    for (int k = 0; k < config.utterances_per_speaker; ++k) {
      Utterance u;
      u.id = uid;
      u.speaker = sp;
      if (k < train_count) {
        u.split = Split::kTrain;
      } else if (k < train_count + config.valid_per_speaker) {
        u.split = Split::kValid;
      } else {
        u.split = Split::kTest;
      }
      if (u.split == Split::kTest) {
        u.content_id = static_cast<int>(arng.uniform_int(config.held_out_content));
      } else {
        u.content_id = config.held_out_content +
                       static_cast<int>(arng.uniform_int(config.content_pool_size -
                                                         config.held_out_content));
      }
      u.tokens = corpus.content_pool[static_cast<size_t>(u.content_id)];
      Rng drng = root.child("durations", static_cast<uint64_t>(uid));
      u.durations.resize(u.tokens.size());
      for (auto& d : u.durations) {
        d = config.min_dur +
            static_cast<int32_t>(drng.uniform_int(config.max_dur - config.min_dur + 1));
      }
      u.phone_labels = frame_labels(u.tokens, u.durations);
      Rng nrng = root.child("noise", static_cast<uint64_t>(uid));
      u.frames = render_frames(u.tokens, u.durations, corpus.inventory,
                               config.feat_dim, sp.formant_scale, sp.f0_base,
                               sp.eq_curve, config.noise_std, &nrng);
      corpus.utterances.push_back(std::move(u));
      ++uid;
    }
  }
  corpus.digest = corpus_digest(corpus);
  return corpus;
}

namespace {

Json speakers_json(const Corpus& corpus) {
  Json arr = Json::array();
  for (const auto& sp : corpus.speakers) {
    Json j;
    j["id"] = sp.speaker_id;
    j["group"] = group_name(sp.group);
    j["formant_scale"] = sp.formant_scale;
    j["f0_base"] = sp.f0_base;
    j["eq_curve"] = sp.eq_curve;
    arr.push_back(std::move(j));
  }
  return arr;
}

Json phones_json(const Corpus& corpus) {
  Json arr = Json::array();
  for (const auto& ph : corpus.inventory.phones) {
    Json j;
    j["positions"] = ph.positions;
    j["amps"] = ph.amps;
    arr.push_back(std::move(j));
  }
  return arr;
}

Json utterances_json(const Corpus& corpus) {
  Json arr = Json::array();
  int64_t offset = 0;
  for (const auto& u : corpus.utterances) {
    Json j;
    j["id"] = u.id;
    j["speaker"] = u.speaker.speaker_id;
    j["split"] = split_name(u.split);
    j["content"] = u.content_id;
    j["tokens"] = u.tokens;
    j["durations"] = u.durations;
    j["num_frames"] = u.frames.rows;
    j["offset"] = offset;
    offset += u.frames.size();
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

uint64_t corpus_digest(const Corpus& corpus) {
  Json core;
  core["config"] = corpus.config.to_json();
  core["phones"] = phones_json(corpus);
  core["speakers"] = speakers_json(corpus);
  core["utterances"] = utterances_json(corpus);
  const std::string s = core.dump();
  uint64_t h = fnv1a64(s.data(), s.size());
  for (const auto& u : corpus.utterances) {
    h = fnv1a64(u.frames.v.data(), u.frames.v.size() * sizeof(float), h);
  }
  return h;
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  Json manifest;
  manifest["format"] = "voxlab-corpus";
  manifest["version"] = 1;
  manifest["config"] = corpus.config.to_json();
  manifest["digest"] = hex64(corpus.digest);
  manifest["frame_dtype"] = "f32";
  manifest["phones"] = phones_json(corpus);
  manifest["speakers"] = speakers_json(corpus);
  manifest["content_pool"] = corpus.content_pool;
  manifest["utterances"] = utterances_json(corpus);
  save_json_file(dir / "manifest.json", manifest);

  std::vector<float> all;
  for (const auto& u : corpus.utterances)
    all.insert(all.end(), u.frames.v.begin(), u.frames.v.end());
  write_file_bytes(dir / "frames.bin", all.data(), all.size() * sizeof(float));
}

Corpus load_corpus(const fs::path& dir) {
  const Json manifest = load_json_file(dir / "manifest.json");
  JsonView v(manifest, "manifest");
  VOXLAB_REQUIRE(v.get_string("format", "") == "voxlab-corpus", ConfigError,
                 dir.string() << ": not a corpus directory");
  VOXLAB_REQUIRE(v.get_int("version") == 1, ConfigError,
                 dir.string() << ": unsupported corpus version");
  Corpus corpus;
  corpus.config = CorpusConfig::from_json(v.at("config"));

  for (const auto& jp : manifest.at("phones")) {
    Phone ph;
    ph.positions = jp.at("positions").get<std::vector<double>>();
    ph.amps = jp.at("amps").get<std::vector<double>>();
    corpus.inventory.phones.push_back(std::move(ph));
  }
  for (const auto& js : manifest.at("speakers")) {
    SpeakerParams sp;
    sp.speaker_id = js.at("id").get<int>();
    sp.group = js.at("group").get<std::string>() == "A" ? SpeakerGroup::kA
                                                        : SpeakerGroup::kB;
    sp.formant_scale = js.at("formant_scale").get<double>();
    sp.f0_base = js.at("f0_base").get<double>();
    sp.eq_curve = js.at("eq_curve").get<std::vector<double>>();
    corpus.speakers.push_back(std::move(sp));
  }
  corpus.content_pool =
      manifest.at("content_pool").get<std::vector<std::vector<int32_t>>>();

  const auto bytes = read_file_bytes(dir / "frames.bin");
  VOXLAB_REQUIRE(bytes.size() % sizeof(float) == 0, IoError,
                 "frames.bin: size not a multiple of 4");
  const auto* fdata = reinterpret_cast<const float*>(bytes.data());
  const int64_t total = static_cast<int64_t>(bytes.size() / sizeof(float));

  const int D = corpus.config.feat_dim;
  for (const auto& ju : manifest.at("utterances")) {
    Utterance u;
    u.id = ju.at("id").get<int>();
    const int spk = ju.at("speaker").get<int>();
    VOXLAB_REQUIRE(spk >= 0 && spk < static_cast<int>(corpus.speakers.size()),
                   ConfigError, "manifest: speaker id out of range");
    u.speaker = corpus.speakers[static_cast<size_t>(spk)];
    u.split = split_from_name(ju.at("split").get<std::string>());
    u.content_id = ju.at("content").get<int>();
    u.tokens = ju.at("tokens").get<std::vector<int32_t>>();
    u.durations = ju.at("durations").get<std::vector<int32_t>>();
    u.phone_labels = frame_labels(u.tokens, u.durations);
    const int64_t T = ju.at("num_frames").get<int64_t>();
    const int64_t offset = ju.at("offset").get<int64_t>();
    VOXLAB_REQUIRE(T == static_cast<int64_t>(u.phone_labels.size()), ConfigError,
                   "manifest: num_frames inconsistent with durations");
    VOXLAB_REQUIRE(offset + T * D <= total, IoError,
                   "frames.bin: utterance " << u.id << " out of bounds");
    u.frames = Mat<float>(T, D);
    std::copy(fdata + offset, fdata + offset + T * D, u.frames.v.begin());
    corpus.utterances.push_back(std::move(u));
  }
  corpus.digest = corpus_digest(corpus);
  const std::string stored = v.get_string("digest");
  VOXLAB_REQUIRE(stored == hex64(corpus.digest), IoError,
                 dir.string() << ": corpus digest mismatch (file corrupt?)");
  return corpus;
}

}  // namespace voxlab
