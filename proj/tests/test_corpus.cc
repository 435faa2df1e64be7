// tests/test_corpus.cc

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <doctest.h>

#include "voxlab/corpus.h"

using namespace voxlab;
namespace fs = std::filesystem;

namespace {

CorpusConfig small_config() {
  CorpusConfig c;
  c.num_phones = 12;
  c.feat_dim = 24;
  c.num_speakers = 6;
  c.utterances_per_speaker = 8;
  c.valid_per_speaker = 2;
  c.test_per_speaker = 2;
  c.tokens_per_utterance = 6;
  c.content_pool_size = 14;
  c.held_out_content = 4;
  c.noise_std = 0.05;
  c.rng_seed = 77;
  return c;
}

}  // namespace

TEST_CASE("build_inventory determinism and distinctness") {
  CorpusConfig c = small_config();
  Rng r1(5), r2(5);
  const auto inv1 = build_inventory(c, r1);
  const auto inv2 = build_inventory(c, r2);
  REQUIRE(inv1.phones.size() == static_cast<size_t>(c.num_phones));
  for (size_t i = 0; i < inv1.phones.size(); ++i) {
    CHECK(inv1.phones[i].positions == inv2.phones[i].positions);
    CHECK(inv1.phones[i].amps == inv2.phones[i].amps);
  }

  CorpusConfig two = c;
  two.num_phones = 2;
  Rng r3(9);
  const auto inv3 = build_inventory(two, r3);
  REQUIRE(inv3.phones.size() == 2);
  CHECK(inv3.phones[0].positions != inv3.phones[1].positions);
}

TEST_CASE("inventory positions stay in (0,1) under every legal voice scale") {
  CorpusConfig c = small_config();
  c.num_phones = 30;
  Rng rng(13);
  const auto inv = build_inventory(c, rng);
  // Combined speaker/transform scale sweeps [1/1.96, 1.96].
  const double lo = 1.0 / (kMaxVoiceScale * kMaxVoiceScale);
  const double hi = kMaxVoiceScale * kMaxVoiceScale;
  for (int step = 0; step <= 200; ++step) {
    const double scale = lo + (hi - lo) * step / 200.0;
    for (const auto& ph : inv.phones) {
      for (const double p : ph.positions) {
        const double sp = p * scale;
        CHECK(sp > 0.0);
        CHECK(sp < 1.0);
      }
      // Strictly increasing positions.
      for (size_t f = 1; f < ph.positions.size(); ++f)
        CHECK(ph.positions[f] > ph.positions[f - 1]);
    }
  }
}

TEST_CASE("sample_speaker groups and bounds") {
  CorpusConfig c = small_config();
  CHECK(kGroupAF0Hi < kGroupBF0Lo);  // disjoint by construction

  Rng ra(3), rb(3);
  const auto s1 = sample_speaker(c, ra, SpeakerGroup::kA, 0);
  const auto s2 = sample_speaker(c, rb, SpeakerGroup::kA, 0);
  CHECK(s1.formant_scale == s2.formant_scale);
  CHECK(s1.f0_base == s2.f0_base);
  CHECK(s1.eq_curve == s2.eq_curve);

  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto g = (i % 2 == 0) ? SpeakerGroup::kA : SpeakerGroup::kB;
    const auto sp = sample_speaker(c, rng, g, i);
    CHECK(sp.formant_scale >= 1.0 / kMaxVoiceScale - 1e-12);
    CHECK(sp.formant_scale <= kMaxVoiceScale + 1e-12);
    for (const double gain : sp.eq_curve) {
      CHECK(gain >= kEqGainLo);
      CHECK(gain <= kEqGainHi);
    }
    if (g == SpeakerGroup::kA) {
      CHECK(sp.f0_base >= kGroupAF0Lo);
      CHECK(sp.f0_base <= kGroupAF0Hi);
    } else {
      CHECK(sp.f0_base >= kGroupBF0Lo);
      CHECK(sp.f0_base <= kGroupBF0Hi);
    }
  }
}

TEST_CASE("render_frames") {
  CorpusConfig c = small_config();
  Rng rng(21);
  const auto inv = build_inventory(c, rng);
  const std::vector<int32_t> tokens{0, 3, 1};
  const std::vector<int32_t> durations{2, 1, 3};
  std::vector<double> flat_eq(static_cast<size_t>(c.feat_dim), 1.0);

  SUBCASE("noise off renders are deterministic") {
    const auto f1 = render_frames(tokens, durations, inv, c.feat_dim, 1.1, 0.07,
                                  flat_eq, 0.0, nullptr);
    const auto f2 = render_frames(tokens, durations, inv, c.feat_dim, 1.1, 0.07,
                                  flat_eq, 0.0, nullptr);
    CHECK(f1.v == f2.v);
    CHECK(f1.rows == 6);
    CHECK(f1.cols == c.feat_dim);
  }

  SUBCASE("flat EQ and unit scale match the closed-form bump sum") {
    const double f0 = 0.08;
    const auto f = render_frames(tokens, durations, inv, c.feat_dim, 1.0, f0,
                                 flat_eq, 0.0, nullptr);
    const auto labels = frame_labels(tokens, durations);
    for (int64_t t = 0; t < f.rows; ++t) {
      const auto& ph = inv.phones[static_cast<size_t>(labels[static_cast<size_t>(t)])];
      for (int b = 0; b < c.feat_dim; ++b) {
        const double x = (b + 0.5) / c.feat_dim;
        double expect = 0.0;
        for (size_t k = 0; k < ph.positions.size(); ++k) {
          const double d = x - ph.positions[k];
          expect += ph.amps[k] *
                    std::exp(-d * d / (2 * kFormantBumpWidth * kFormantBumpWidth));
        }
        const double dp = x - f0;
        expect += kPitchAmp * std::exp(-dp * dp / (2 * kPitchBumpWidth * kPitchBumpWidth));
        CHECK(static_cast<double>(f.at(t, b)) == doctest::Approx(expect).epsilon(1e-6));
      }
    }
  }

  SUBCASE("same tokens, two speakers: labels match, frames differ") {
    Rng sr1(100), sr2(101);
    const auto spA = sample_speaker(c, sr1, SpeakerGroup::kA, 0);
    const auto spB = sample_speaker(c, sr2, SpeakerGroup::kB, 1);
    const auto fa = render_frames(tokens, durations, inv, c.feat_dim,
                                  spA.formant_scale, spA.f0_base, spA.eq_curve,
                                  0.0, nullptr);
    const auto fb = render_frames(tokens, durations, inv, c.feat_dim,
                                  spB.formant_scale, spB.f0_base, spB.eq_curve,
                                  0.0, nullptr);
    CHECK(frame_labels(tokens, durations) == frame_labels(tokens, durations));
    CHECK(fa.v != fb.v);
  }
}

TEST_CASE("build_corpus structure") {
  const CorpusConfig c = small_config();
  const Corpus corpus = build_corpus(c);

  const auto train = corpus.utterance_ids(Split::kTrain);
  const auto valid = corpus.utterance_ids(Split::kValid);
  const auto test = corpus.utterance_ids(Split::kTest);
  CHECK(train.size() + valid.size() + test.size() ==
        static_cast<size_t>(c.num_speakers * c.utterances_per_speaker));

  // Every test speaker is a train speaker (probes require seen speakers).
  std::set<int> train_speakers, test_speakers;
  for (const int id : train)
    train_speakers.insert(corpus.utterances[static_cast<size_t>(id)].speaker.speaker_id);
  for (const int id : test)
    test_speakers.insert(corpus.utterances[static_cast<size_t>(id)].speaker.speaker_id);
  for (const int s : test_speakers) CHECK(train_speakers.count(s) == 1);
  CHECK(train_speakers.size() == static_cast<size_t>(c.num_speakers));

  // Held-out content never leaks into train or valid.
  for (const int id : train)
    CHECK(corpus.utterances[static_cast<size_t>(id)].content_id >= c.held_out_content);
  for (const int id : valid)
    CHECK(corpus.utterances[static_cast<size_t>(id)].content_id >= c.held_out_content);
  for (const int id : test)
    CHECK(corpus.utterances[static_cast<size_t>(id)].content_id < c.held_out_content);

  // T equals the duration sum and labels are consistent with tokens.
  for (const auto& u : corpus.utterances) {
    int64_t total = 0;
    for (const int32_t d : u.durations) total += d;
    CHECK(u.frames.rows == total);
    CHECK(static_cast<int64_t>(u.phone_labels.size()) == total);
    size_t t = 0;
    for (size_t k = 0; k < u.tokens.size(); ++k) {
      for (int32_t d = 0; d < u.durations[k]; ++d)
        CHECK(u.phone_labels[t++] == u.tokens[k]);
    }
  }

  // Every phone appears in the train split.
  std::set<int32_t> train_phones;
  for (const int id : train)
    for (const int32_t ph : corpus.utterances[static_cast<size_t>(id)].tokens)
      train_phones.insert(ph);
  CHECK(train_phones.size() == static_cast<size_t>(c.num_phones));
}

TEST_CASE("content/speaker factorization: labels depend only on content") {
  const CorpusConfig c = small_config();
  const Corpus corpus = build_corpus(c);
  for (const auto& a : corpus.utterances) {
    for (const auto& b : corpus.utterances) {
      if (a.content_id == b.content_id) CHECK(a.tokens == b.tokens);
    }
  }
}

TEST_CASE("corpus digest is reproducible and save/load round-trips") {
  const CorpusConfig c = small_config();
  const Corpus c1 = build_corpus(c);
  const Corpus c2 = build_corpus(c);
  CHECK(c1.digest == c2.digest);

  CorpusConfig other = c;
  other.rng_seed = 78;
  CHECK(build_corpus(other).digest != c1.digest);

  const fs::path dir = fs::temp_directory_path() / "voxlab_test_corpus";
  fs::remove_all(dir);
  save_corpus(c1, dir);
  const Corpus loaded = load_corpus(dir);
  CHECK(loaded.digest == c1.digest);
  CHECK(loaded.utterances.size() == c1.utterances.size());
  for (size_t i = 0; i < loaded.utterances.size(); ++i) {
    CHECK(loaded.utterances[i].frames.v == c1.utterances[i].frames.v);
    CHECK(loaded.utterances[i].phone_labels == c1.utterances[i].phone_labels);
    CHECK(loaded.utterances[i].split == c1.utterances[i].split);
  }
  fs::remove_all(dir);
}

TEST_CASE("config validation rejects degenerate worlds") {
  CorpusConfig c = small_config();
  c.num_speakers = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.num_phones = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.max_dur = c.min_dur - 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
