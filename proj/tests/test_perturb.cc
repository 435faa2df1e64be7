// tests/test_perturb.cc

#include <cmath>

#include <doctest.h>

#include "voxlab/corpus.h"
#include "voxlab/perturb.h"

using namespace voxlab;

namespace {

CorpusConfig tiny_config() {
  CorpusConfig c;
  c.num_phones = 8;
  c.feat_dim = 24;
  c.num_speakers = 4;
  c.utterances_per_speaker = 6;
  c.valid_per_speaker = 1;
  c.test_per_speaker = 1;
  c.tokens_per_utterance = 5;
  c.content_pool_size = 8;
  c.held_out_content = 2;
  c.noise_std = 0.0;
  c.rng_seed = 42;
  return c;
}

}  // namespace

TEST_CASE("sample_transform statistics") {
  Rng rng(2024);
  const int n = 10000;
  int rho1_up = 0;
  double flip_cov = 0, flip1_mean = 0, flip2_mean = 0;
  std::vector<int> f1(n), f2(n);
  for (int i = 0; i < n; ++i) {
    const auto p = sample_transform(16, rng);
    CHECK(std::fabs(std::log(p.rho1)) <= std::log(kMaxVoiceScale) + 1e-12);
    CHECK(std::fabs(std::log(p.rho2)) <= std::log(kMaxVoiceScale) + 1e-12);
    if (p.rho1 > 1.0) ++rho1_up;
    f1[static_cast<size_t>(i)] = p.rho1 > 1.0 ? 1 : 0;
    f2[static_cast<size_t>(i)] = p.rho2 > 1.0 ? 1 : 0;
    for (const double g : p.eq_curve) {
      CHECK(g >= kEqGainLo);
      CHECK(g <= kEqGainHi);
    }
  }
  const double up_frac = static_cast<double>(rho1_up) / n;
  CHECK(std::fabs(up_frac - 0.5) <= 0.02);

  for (int i = 0; i < n; ++i) {
    flip1_mean += f1[static_cast<size_t>(i)];
    flip2_mean += f2[static_cast<size_t>(i)];
  }
  flip1_mean /= n;
  flip2_mean /= n;
  for (int i = 0; i < n; ++i)
    flip_cov += (f1[static_cast<size_t>(i)] - flip1_mean) * (f2[static_cast<size_t>(i)] - flip2_mean);
  flip_cov /= n;
  const double corr =
      flip_cov / std::sqrt(flip1_mean * (1 - flip1_mean) * flip2_mean * (1 - flip2_mean));
  CHECK(std::fabs(corr) <= 0.03);
}

TEST_CASE("sample_transform determinism") {
  Rng r1(7), r2(7);
  const auto p1 = sample_transform(12, r1);
  const auto p2 = sample_transform(12, r2);
  CHECK(p1.rho1 == p2.rho1);
  CHECK(p1.rho2 == p2.rho2);
  CHECK(p1.eq_curve == p2.eq_curve);
}

TEST_CASE("apply_transform") {
  const CorpusConfig c = tiny_config();
  const Corpus corpus = build_corpus(c);
  const Utterance& u = corpus.utterances[3];

  SUBCASE("identity params leave noiseless frames unchanged") {
    const auto out =
        apply_transform(u, identity_transform(c.feat_dim), corpus.inventory, 0.0, nullptr);
    CHECK(out.frames.v == u.frames.v);
    CHECK(out.phone_labels == u.phone_labels);
    CHECK(out.speaker.speaker_id == u.speaker.speaker_id);
  }

  SUBCASE("content is invariant under sampled transforms") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      const auto p = sample_transform(c.feat_dim, rng);
      const auto out = apply_transform(u, p, corpus.inventory, 0.0, nullptr);
      CHECK(out.phone_labels == u.phone_labels);
      CHECK(out.tokens == u.tokens);
      CHECK(out.durations == u.durations);
      CHECK(out.speaker.speaker_id == u.speaker.speaker_id);
    }
  }

  SUBCASE("inverse transform recovers the original frames (noise off)") {
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
      const auto p = sample_transform(c.feat_dim, rng);
      const auto fwd = apply_transform(u, p, corpus.inventory, 0.0, nullptr);
      const auto back =
          apply_transform(fwd, inverse_transform(p), corpus.inventory, 0.0, nullptr);
      REQUIRE(back.frames.v.size() == u.frames.v.size());
      for (size_t k = 0; k < u.frames.v.size(); ++k) {
        CHECK(std::fabs(static_cast<double>(back.frames.v[k]) -
                        static_cast<double>(u.frames.v[k])) < 1e-6);
      }
    }
  }

  SUBCASE("overflowing formant positions are a contract error") {
    Corpus bad = corpus;
    bad.inventory.phones[static_cast<size_t>(u.tokens[0])].positions.back() = 0.9;
    TransformParams p = identity_transform(c.feat_dim);
    p.rho1 = 1.4;
    Utterance uu = u;
    uu.speaker.formant_scale = 1.4;
    CHECK_THROWS_AS(apply_transform(uu, p, bad.inventory, 0.0, nullptr), ContractError);
  }
}

TEST_CASE("formant scaling preserves relative ratios exactly") {
  SUBCASE("hand case: rho1=1.4 on positions (0.2, 0.4)") {
    const double rho1 = 1.4;
    const double c1 = 0.2 * rho1;
    const double c2 = 0.4 * rho1;
    CHECK(c1 == doctest::Approx(0.28).epsilon(1e-12));
    CHECK(c2 == doctest::Approx(0.56).epsilon(1e-12));
    CHECK(c1 / c2 == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("property over a sampled inventory") {
    CorpusConfig c = tiny_config();
    Rng rng(19);
    const auto inv = build_inventory(c, rng);
    Rng trng(23);
    for (int it = 0; it < 50; ++it) {
      const auto p = sample_transform(c.feat_dim, trng);
      for (const auto& ph : inv.phones) {
        for (size_t i = 0; i < ph.positions.size(); ++i) {
          for (size_t j = i + 1; j < ph.positions.size(); ++j) {
            const double before = ph.positions[i] / ph.positions[j];
            const double after = (ph.positions[i] * p.rho1) / (ph.positions[j] * p.rho1);
            CHECK(std::fabs(before - after) < 1e-12);
          }
        }
      }
    }
  }
}
