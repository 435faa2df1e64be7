// tests/test_metrics.cc

#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "voxlab/metrics.h"
#include "voxlab/rng.h"
#include "voxlab/trainer.h"

using namespace voxlab;

namespace {

CorpusConfig probe_corpus_config() {
  CorpusConfig c;
  c.num_phones = 12;
  c.feat_dim = 20;
  c.num_speakers = 8;
  c.utterances_per_speaker = 12;
  c.valid_per_speaker = 2;
  c.test_per_speaker = 3;
  c.tokens_per_utterance = 6;
  c.content_pool_size = 16;
  c.held_out_content = 4;
  c.noise_std = 0.05;
  c.rng_seed = 9;
  return c;
}

// Exhaustive enumeration of all monotone alignments; minimum total cost,
// then minimum path length. The DP must reproduce this exactly.
void enumerate_paths(const Mat<double>& cost, int64_t i, int64_t j, double acc,
                     int len, double* best_cost, int* best_len) {
  acc += cost.at(i, j);
  len += 1;
  if (i == cost.rows - 1 && j == cost.cols - 1) {
    if (acc < *best_cost || (acc == *best_cost && len < *best_len)) {
      *best_cost = acc;
      *best_len = len;
    }
    return;
  }
  if (i + 1 < cost.rows && j + 1 < cost.cols)
    enumerate_paths(cost, i + 1, j + 1, acc, len, best_cost, best_len);
  if (i + 1 < cost.rows) enumerate_paths(cost, i + 1, j, acc, len, best_cost, best_len);
  if (j + 1 < cost.cols) enumerate_paths(cost, i, j + 1, acc, len, best_cost, best_len);
}

double oracle_dtw_average(const Mat<double>& cost) {
  double best_cost = 1e300;
  int best_len = 1 << 30;
  enumerate_paths(cost, 0, 0, 0.0, 0, &best_cost, &best_len);
  return best_cost / best_len;
}

Mat<double> angular_cost(const Mat<double>& a, const Mat<double>& b) {
  Mat<double> c(a.rows, b.rows);
  for (int64_t i = 0; i < a.rows; ++i) {
    for (int64_t j = 0; j < b.rows; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (int64_t k = 0; k < a.cols; ++k) {
        dot += a.at(i, k) * b.at(j, k);
        na += a.at(i, k) * a.at(i, k);
        nb += b.at(j, k) * b.at(j, k);
      }
      const double den = std::max(std::sqrt(na) * std::sqrt(nb), 1e-5);
      c.at(i, j) = std::acos(std::clamp(dot / den, -1.0, 1.0)) / 3.14159265358979323846;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("linear_probe") {
  SUBCASE("linearly separable two-class toy reaches accuracy 1") {
    Rng rng(3);
    const int64_t n = 120;
    Mat<double> x(n, 2);
    std::vector<int32_t> y(static_cast<size_t>(n));
    std::vector<int> split(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const int32_t c = static_cast<int32_t>(i % 2);
      x.at(i, 0) = (c == 0 ? -2.0 : 2.0) + 0.3 * rng.gaussian();
      x.at(i, 1) = rng.gaussian();
      y[static_cast<size_t>(i)] = c;
      split[static_cast<size_t>(i)] = static_cast<int>(i % 5 == 3) +
                                      2 * static_cast<int>(i % 5 == 4);
    }
    const auto r = linear_probe(x, y, split, 2);
    CHECK(r.train_accuracy == doctest::Approx(1.0));
    CHECK(r.test_accuracy == doctest::Approx(1.0));
    CHECK(r.chance == doctest::Approx(0.5));
  }

  SUBCASE("shuffled labels score near chance") {
    Rng rng(17);
    const int64_t n = 900;
    const int C = 3;
    Mat<double> x(n, 6);
    for (auto& v : x.v) v = rng.gaussian();
    std::vector<int32_t> y(static_cast<size_t>(n));
    std::vector<int> split(static_cast<size_t>(n));
    int64_t n_test = 0;
    for (int64_t i = 0; i < n; ++i) {
      y[static_cast<size_t>(i)] = static_cast<int32_t>(rng.uniform_int(C));
      split[static_cast<size_t>(i)] =
          (i % 4 == 2) ? 1 : ((i % 4 == 3) ? 2 : 0);
      if (split[static_cast<size_t>(i)] == 2) ++n_test;
    }
    const auto r = linear_probe(x, y, split, C);
    const double chance = 1.0 / C;
    const double sigma = std::sqrt(chance * (1 - chance) / static_cast<double>(n_test));
    CHECK(std::fabs(r.test_accuracy - chance) <= 3.0 * sigma);
  }

  SUBCASE("identical features fall back to the majority class") {
    const int64_t n = 60;
    Mat<double> x(n, 3);  // all zero rows
    std::vector<int32_t> y(static_cast<size_t>(n));
    std::vector<int> split(static_cast<size_t>(n));
    // 2:1 majority of class 0 in every split.
    for (int64_t i = 0; i < n; ++i) {
      y[static_cast<size_t>(i)] = (i % 3 == 2) ? 1 : 0;
      split[static_cast<size_t>(i)] = static_cast<int>(i % 5 == 3) +
                                      2 * static_cast<int>(i % 5 == 4);
    }
    const auto r = linear_probe(x, y, split, 2);
    CHECK(r.test_accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  }

  SUBCASE("unseen test label is rejected") {
    Mat<double> x(4, 2, {0, 0, 1, 1, 2, 2, 3, 3});
    const std::vector<int32_t> y{0, 0, 0, 1};
    const std::vector<int> split{0, 0, 1, 2};
    CHECK_THROWS_AS(linear_probe(x, y, split, 2), ContractError);
  }

  SUBCASE("phone one-hot features recover the phone labels perfectly") {
    const Corpus corpus = build_corpus(probe_corpus_config());
    const int P = corpus.config.num_phones;
    int64_t total = 0;
    for (const auto& u : corpus.utterances) total += u.num_frames();
    Mat<double> x(total, P);
    std::vector<int32_t> y;
    std::vector<int> split;
    int64_t row = 0;
    for (const auto& u : corpus.utterances) {
      for (const int32_t ph : u.phone_labels) {
        x.at(row, ph) = 1.0;
        y.push_back(ph);
        split.push_back(static_cast<int>(u.split));
        ++row;
      }
    }
    const auto r = linear_probe(x, y, split, P);
    CHECK(r.test_accuracy == doctest::Approx(1.0));
  }
}

TEST_CASE("the synthetic world carries probeable speaker and content structure") {
  const Corpus corpus = build_corpus(probe_corpus_config());
  const auto sid = raw_frame_sid_probe(corpus);
  CHECK(sid.test_accuracy >= 3.0 * sid.chance);
  const auto phone = raw_frame_phone_probe(corpus, {}, 4000, 2);
  CHECK(phone.test_accuracy >= 3.0 * phone.chance);
}

TEST_CASE("pnmi") {
  SUBCASE("identical labelings give exactly one") {
    const std::vector<int32_t> a{0, 1, 2, 0, 1, 2, 2, 1};
    CHECK(pnmi(a, a) == 1.0);
    // Any pure refinement also gives exactly one.
    const std::vector<int32_t> phones{0, 0, 1, 1, 2, 2, 2, 2};
    const std::vector<int32_t> refine{0, 0, 1, 1, 2, 2, 3, 3};
    CHECK(pnmi(refine, phones) == 1.0);
  }
  SUBCASE("an exact product distribution gives zero") {
    std::vector<int32_t> phones, clusters;
    for (int rep = 0; rep < 6; ++rep) {
      for (int p = 0; p < 2; ++p) {
        for (int c = 0; c < 3; ++c) {
          phones.push_back(p);
          clusters.push_back(c);
        }
      }
    }
    CHECK(pnmi(clusters, phones) < 0.02);
  }
  SUBCASE("hand-computed 2x2 joint") {
    // Joint counts [[2,1],[1,2]] over six frames.
    const std::vector<int32_t> phones{0, 0, 0, 1, 1, 1};
    const std::vector<int32_t> clusters{0, 0, 1, 0, 1, 1};
    CHECK(pnmi(clusters, phones) == doctest::Approx(0.0817042).epsilon(1e-4));
  }
  SUBCASE("invariant under relabeling") {
    Rng rng(5);
    std::vector<int32_t> phones(300), clusters(300);
    for (auto& p : phones) p = static_cast<int32_t>(rng.uniform_int(4));
    for (size_t i = 0; i < clusters.size(); ++i)
      clusters[i] = static_cast<int32_t>((phones[i] + rng.uniform_int(2)) % 5);
    const double base = pnmi(clusters, phones);
    std::vector<int32_t> perm_c(clusters), perm_p(phones);
    const int32_t cmap[5]{3, 4, 0, 2, 1};
    const int32_t pmap[4]{2, 0, 3, 1};
    for (auto& c : perm_c) c = cmap[c];
    for (auto& p : perm_p) p = pmap[p];
    CHECK(pnmi(perm_c, perm_p) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("zero-entropy phones are rejected") {
    const std::vector<int32_t> phones{1, 1, 1};
    const std::vector<int32_t> clusters{0, 1, 2};
    CHECK_THROWS_AS(pnmi(clusters, phones), ContractError);
  }
}

TEST_CASE("dtw average cost matches exhaustive enumeration") {
  Rng rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    const int64_t m = 1 + rng.uniform_int(5);
    const int64_t n = 1 + rng.uniform_int(5);
    Mat<double> cost(m, n);
    for (auto& v : cost.v) v = rng.uniform() < 0.4 ? 0.0 : rng.uniform();
    CHECK(dtw_average_cost(cost) == doctest::Approx(oracle_dtw_average(cost)).epsilon(1e-12));
  }
}

TEST_CASE("dtw_l0") {
  std::vector<int32_t> identity(16);
  std::iota(identity.begin(), identity.end(), 0);

  SUBCASE("identical sequences cost zero") {
    const std::vector<int32_t> a{3, 3, 5, 1};
    CHECK(dtw_l0(a, a, identity) == 0.0);
  }
  SUBCASE("disjoint label sets cost one") {
    const std::vector<int32_t> a{0, 1, 2};
    const std::vector<int32_t> b{3, 4, 5, 6};
    CHECK(dtw_l0(a, b, identity) == 1.0);
  }
  SUBCASE("stretch-compatible sequences align at zero cost") {
    const std::vector<int32_t> a{1, 1, 2, 3};
    const std::vector<int32_t> b{1, 2, 2, 3};
    CHECK(dtw_l0(a, b, identity) == 0.0);
  }
  SUBCASE("symmetric in its arguments") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int32_t> a(1 + rng.uniform_int(6)), b(1 + rng.uniform_int(6));
      for (auto& v : a) v = static_cast<int32_t>(rng.uniform_int(4));
      for (auto& v : b) v = static_cast<int32_t>(rng.uniform_int(4));
      CHECK(dtw_l0(a, b, identity) == doctest::Approx(dtw_l0(b, a, identity)).epsilon(1e-12));
    }
  }
  SUBCASE("matches the exhaustive oracle on short sequences") {
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
      std::vector<int32_t> a(1 + rng.uniform_int(6)), b(1 + rng.uniform_int(6));
      for (auto& v : a) v = static_cast<int32_t>(rng.uniform_int(3));
      for (auto& v : b) v = static_cast<int32_t>(rng.uniform_int(3));
      Mat<double> cost(static_cast<int64_t>(a.size()), static_cast<int64_t>(b.size()));
      for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j)
          cost.at(static_cast<int64_t>(i), static_cast<int64_t>(j)) =
              a[i] == b[j] ? 0.0 : 1.0;
      CHECK(dtw_l0(a, b, identity) ==
            doctest::Approx(oracle_dtw_average(cost)).epsilon(1e-12));
    }
  }
}

TEST_CASE("rank_labels_by_group") {
  CorpusConfig cc = probe_corpus_config();
  cc.num_speakers = 4;
  cc.utterances_per_speaker = 4;
  cc.valid_per_speaker = 1;
  cc.test_per_speaker = 1;
  const Corpus corpus = build_corpus(cc);

  SUBCASE("hand case: ratios 0.2 and 0.8 order the two clusters") {
    // Cluster 0 mostly group A, cluster 1 mostly group B.
    std::vector<std::vector<int32_t>> labels(corpus.utterances.size());
    for (const auto& u : corpus.utterances) {
      auto& l = labels[static_cast<size_t>(u.id)];
      const bool is_a = u.speaker.group == SpeakerGroup::kA;
      for (int64_t t = 0; t < u.num_frames(); ++t) {
        const bool mostly = (t % 5) != 0;  // 80/20 mixture
        l.push_back(is_a ? (mostly ? 0 : 1) : (mostly ? 1 : 0));
      }
    }
    const auto rank = rank_labels_by_group(labels, corpus, 2);
    CHECK(rank == std::vector<int32_t>{0, 1});
  }

  SUBCASE("a group-A-only cluster ranks below any mixed cluster") {
    std::vector<std::vector<int32_t>> labels(corpus.utterances.size());
    for (const auto& u : corpus.utterances) {
      auto& l = labels[static_cast<size_t>(u.id)];
      const bool is_a = u.speaker.group == SpeakerGroup::kA;
      for (int64_t t = 0; t < u.num_frames(); ++t) l.push_back(is_a ? 0 : 1);
    }
    // Cluster 0: only A (ratio 0); cluster 1: only B (ratio 1).
    const auto rank = rank_labels_by_group(labels, corpus, 3);
    CHECK(rank[0] < rank[1]);
    // Unused cluster 2 ties ratio 0 with cluster 0; id breaks the tie.
    CHECK(rank[0] < rank[2]);
    std::vector<int32_t> sorted = rank;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int32_t>{0, 1, 2});
  }

  SUBCASE("uniform usage falls back to cluster-id order") {
    // Hand-built two-utterance world with exactly equal cluster usage.
    Corpus tiny;
    tiny.utterances.resize(2);
    tiny.utterances[0].id = 0;
    tiny.utterances[0].speaker.group = SpeakerGroup::kA;
    tiny.utterances[1].id = 1;
    tiny.utterances[1].speaker.group = SpeakerGroup::kB;
    const std::vector<std::vector<int32_t>> labels{{0, 0, 1, 1, 2, 2},
                                                   {0, 0, 1, 1, 2, 2}};
    const auto rank = rank_labels_by_group(labels, tiny, 3);
    CHECK(rank == std::vector<int32_t>{0, 1, 2});
  }
}

TEST_CASE("auto_bleu") {
  const std::vector<int32_t> abab{0, 1, 0, 1};
  CHECK(auto_bleu(abab, 1) == doctest::Approx(1.0));
  CHECK(auto_bleu(abab, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  const std::vector<int32_t> distinct{4, 7, 1, 9, 2};
  for (int k = 1; k <= 5; ++k) CHECK(auto_bleu(distinct, k) == 0.0);
  CHECK_THROWS_AS(auto_bleu(distinct, 6), ContractError);
}

TEST_CASE("abx score") {
  SUBCASE("perfect separation scores one") {
    std::vector<AbxTriplet> triplets;
    for (int i = 0; i < 5; ++i) {
      AbxTriplet t;
      t.a = Mat<double>(3, 4);
      t.x = Mat<double>(2, 4);
      t.b = Mat<double>(3, 4);
      for (int64_t r = 0; r < 3; ++r) t.a.at(r, 0) = 1.0;
      for (int64_t r = 0; r < 2; ++r) t.x.at(r, 0) = 1.0;  // same direction as a
      for (int64_t r = 0; r < 3; ++r) t.b.at(r, 1) = 1.0;  // orthogonal
      triplets.push_back(std::move(t));
    }
    CHECK(abx_score(triplets) == doctest::Approx(1.0));
  }

  SUBCASE("a == b ties score one half") {
    AbxTriplet t;
    t.a = Mat<double>(2, 3);
    t.b = Mat<double>(2, 3);
    t.x = Mat<double>(2, 3);
    Rng rng(3);
    for (auto& v : t.a.v) v = rng.gaussian();
    t.b = t.a;
    for (auto& v : t.x.v) v = rng.gaussian();
    std::vector<AbxTriplet> one;
    one.push_back(std::move(t));
    CHECK(abx_score(one) == doctest::Approx(0.5));
  }

  SUBCASE("hand-built triplets match the exhaustive alignment oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      AbxTriplet t;
      t.a = Mat<double>(1 + rng.uniform_int(5), 3);
      t.b = Mat<double>(1 + rng.uniform_int(5), 3);
      t.x = Mat<double>(1 + rng.uniform_int(5), 3);
      for (auto& v : t.a.v) v = rng.gaussian();
      for (auto& v : t.b.v) v = rng.gaussian();
      for (auto& v : t.x.v) v = rng.gaussian();
      const double da = dtw_angular_distance(t.x, t.a);
      const double db = dtw_angular_distance(t.x, t.b);
      CHECK(da == doctest::Approx(oracle_dtw_average(angular_cost(t.x, t.a))).epsilon(1e-12));
      CHECK(db == doctest::Approx(oracle_dtw_average(angular_cost(t.x, t.b))).epsilon(1e-12));
      std::vector<AbxTriplet> one;
      one.push_back(std::move(t));
      const double s = abx_score(one);
      CHECK(s == (da < db ? 1.0 : (da == db ? 0.5 : 0.0)));
    }
  }

  SUBCASE("invariant under per-frame positive rescaling") {
    Rng rng(29);
    std::vector<AbxTriplet> base;
    for (int i = 0; i < 10; ++i) {
      AbxTriplet t;
      t.a = Mat<double>(3, 4);
      t.b = Mat<double>(4, 4);
      t.x = Mat<double>(3, 4);
      for (auto& v : t.a.v) v = rng.gaussian();
      for (auto& v : t.b.v) v = rng.gaussian();
      for (auto& v : t.x.v) v = rng.gaussian();
      base.push_back(std::move(t));
    }
    std::vector<AbxTriplet> scaled = base;
    for (auto& t : scaled) {
      for (auto* seg : {&t.a, &t.b, &t.x}) {
        for (int64_t r = 0; r < seg->rows; ++r) {
          const double c = 0.1 + 5.0 * rng.uniform();
          for (int64_t k = 0; k < seg->cols; ++k) seg->at(r, k) *= c;
        }
      }
    }
    CHECK(abx_score(scaled) == doctest::Approx(abx_score(base)).epsilon(1e-9));
  }
}

TEST_CASE("abx tasks built from the corpus separate real from degenerate features") {
  const Corpus corpus = build_corpus(probe_corpus_config());
  // Phone one-hot features: the ideal representation scores 1.
  std::vector<Mat<double>> ideal(corpus.utterances.size());
  for (const auto& u : corpus.utterances) {
    Mat<double> f(u.num_frames(), corpus.config.num_phones);
    for (int64_t t = 0; t < u.num_frames(); ++t)
      f.at(t, u.phone_labels[static_cast<size_t>(t)]) = 1.0;
    ideal[static_cast<size_t>(u.id)] = std::move(f);
  }
  for (const auto mode : {AbxMode::kWithin, AbxMode::kCross}) {
    const auto tasks = build_abx_tasks(corpus, ideal, mode, 100, 3);
    REQUIRE(tasks.size() == 100);
    CHECK(abx_score(tasks) == doctest::Approx(1.0));
  }
  // Constant features cannot do better than the tie rule.
  std::vector<Mat<double>> flat(corpus.utterances.size());
  for (const auto& u : corpus.utterances) {
    Mat<double> f(u.num_frames(), 4);
    for (auto& v : f.v) v = 1.0;
    flat[static_cast<size_t>(u.id)] = std::move(f);
  }
  const auto tasks = build_abx_tasks(corpus, flat, AbxMode::kWithin, 50, 4);
  CHECK(abx_score(tasks) == doctest::Approx(0.5));
}

TEST_CASE("best layer by pnmi picks the planted one-hot layer") {
  CorpusConfig cc = probe_corpus_config();
  cc.num_speakers = 4;
  cc.utterances_per_speaker = 6;
  cc.valid_per_speaker = 2;
  cc.test_per_speaker = 1;
  const Corpus corpus = build_corpus(cc);
  Rng rng(31);
  const int L = 3;
  std::vector<std::vector<Mat<float>>> layer_feats(
      L, std::vector<Mat<float>>(corpus.utterances.size()));
  for (const auto& u : corpus.utterances) {
    for (int l = 0; l < L; ++l) {
      Mat<float> f(u.num_frames(), cc.num_phones);
      if (l == 1) {
        for (int64_t t = 0; t < u.num_frames(); ++t)
          f.at(t, u.phone_labels[static_cast<size_t>(t)]) = 1.0f;
      } else {
        for (auto& v : f.v) v = static_cast<float>(rng.gaussian());
      }
      layer_feats[static_cast<size_t>(l)][static_cast<size_t>(u.id)] = std::move(f);
    }
  }
  // Layer 2 (1-based) holds the phone one-hots.
  CHECK(best_layer_by_pnmi_features(corpus, layer_feats, cc.num_phones, 5) == 2);
  CHECK(best_layer_by_pnmi_features(corpus, layer_feats, cc.num_phones, 5) == 2);
}

TEST_CASE("layerwise SID curve on an untrained model is roughly flat") {
  CorpusConfig cc = probe_corpus_config();
  const Corpus corpus = build_corpus(cc);
  ModelConfig mc;
  mc.num_encoder_layers = 3;
  mc.model_dim = 16;
  mc.num_heads = 2;
  mc.ffn_dim = 32;
  mc.predictor_layers = 2;
  mc.num_classes = 12;
  mc.speaker_embed_dim = 4;
  mc.final_proj_dim = 8;
  Checkpoint<float> ckpt;
  ckpt.params = init_model_params<float>(mc, cc.feat_dim, cc.num_speakers, 77);
  const ModelHandle handle{AnyCheckpoint(std::move(ckpt))};
  const auto curve = layerwise_sid_curve(handle, corpus);
  REQUIRE(curve.size() == static_cast<size_t>(handle.num_probe_layers()));
  const double base = curve[0].test_accuracy;
  for (const auto& r : curve) {
    CHECK(std::fabs(r.test_accuracy - base) <= 0.15);
    CHECK(r.task == "sid");
  }
  CHECK(curve[0].stage == std::string("input"));
  CHECK(curve[3].stage == std::string("encoder"));
  CHECK(curve.back().stage == std::string("predictor"));
}

TEST_CASE("speaker probe on teacher labels separates raw from normalized teachers") {
  CorpusConfig cc = probe_corpus_config();
  cc.noise_std = 0.05;
  const Corpus corpus = build_corpus(cc);

  TeacherConfig raw_cfg;
  raw_cfg.mode = TeacherMode::kRawFrames;
  raw_cfg.K = 24;
  raw_cfg.seed = 5;
  const TeacherSet raw = generate_teacher_labels(corpus, raw_cfg);

  TeacherConfig norm_cfg;
  norm_cfg.mode = TeacherMode::kNormalizedFrames;
  norm_cfg.K = 24;
  norm_cfg.normalize_beta = 1.0;
  norm_cfg.seed = 5;
  const TeacherSet norm = generate_teacher_labels(corpus, norm_cfg);

  // Teacher disentanglement: converted teachers align better with phones and
  // carry less speaker information.
  std::vector<int32_t> raw_all, norm_all, phones_all;
  for (const auto& u : corpus.utterances) {
    const auto& r = raw.labels[static_cast<size_t>(u.id)];
    const auto& m = norm.labels[static_cast<size_t>(u.id)];
    raw_all.insert(raw_all.end(), r.begin(), r.end());
    norm_all.insert(norm_all.end(), m.begin(), m.end());
    phones_all.insert(phones_all.end(), u.phone_labels.begin(), u.phone_labels.end());
  }
  const double pnmi_raw = pnmi(raw_all, phones_all);
  const double pnmi_norm = pnmi(norm_all, phones_all);
  CHECK(pnmi_norm > pnmi_raw);

  const auto probe_raw = speaker_probe_on_labels(raw.labels, corpus, raw_cfg.K);
  const auto probe_norm = speaker_probe_on_labels(norm.labels, corpus, norm_cfg.K);
  CHECK(probe_raw.test_accuracy > probe_norm.test_accuracy);
}
