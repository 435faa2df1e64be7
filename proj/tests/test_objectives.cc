// tests/test_objectives.cc

#include <cmath>
#include <vector>

#include <doctest.h>

#include "voxlab/model.h"
#include "voxlab/objectives.h"
#include "voxlab/rng.h"
#include "test_util.h"

using namespace voxlab;
using voxtest::fd_max_rel_err;
using voxtest::fd_max_rel_err_at;

namespace {

// Identity-like rows: T orthonormal anchors in R^T.
Mat<double> orthonormal_rows(int64_t T) {
  Mat<double> m(T, T);
  for (int64_t i = 0; i < T; ++i) m.at(i, i) = 1.0;
  return m;
}

Tensor<double> leaf_of(TapeD& tape, const Mat<double>& m, bool rg = true) {
  return tape.leaf(m.rows, m.cols, m.v, rg);
}

std::vector<std::vector<int32_t>> all_other_negatives(int64_t T) {
  std::vector<std::vector<int32_t>> negs(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t u = 0; u < T; ++u) {
      if (u != t) negs[static_cast<size_t>(t)].push_back(static_cast<int32_t>(u));
    }
  }
  return negs;
}

}  // namespace

TEST_CASE("masked_prediction_loss closed forms") {
  const int64_t T = 6;
  const int K = 100;
  std::vector<int32_t> labels(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) labels[static_cast<size_t>(t)] = static_cast<int32_t>(t % K);
  MaskSpec m1, m2;
  m1.masked.assign(static_cast<size_t>(T), 1);
  m1.masked[0] = 0;
  m2.masked.assign(static_cast<size_t>(T), 1);
  m2.masked[5] = 0;

  auto perfect = [&](TapeD& tape) {
    Mat<double> l(T, K);
    for (int64_t t = 0; t < T; ++t) l.at(t, labels[static_cast<size_t>(t)]) = 60.0;
    return leaf_of(tape, l, false);
  };
  auto uniform = [&](TapeD& tape) {
    Mat<double> l(T, K);
    return leaf_of(tape, l, false);
  };

  SUBCASE("both views perfect: loss vanishes") {
    TapeD tape;
    std::vector<ViewLogits<double>> views{{perfect(tape), &m1}, {perfect(tape), &m2}};
    CHECK(tape.scalar_value(masked_prediction_loss<double>(tape, views, labels)) ==
          doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("uniform logits: ln K") {
    TapeD tape;
    std::vector<ViewLogits<double>> views{{uniform(tape), &m1}, {uniform(tape), &m2}};
    CHECK(tape.scalar_value(masked_prediction_loss<double>(tape, views, labels)) ==
          doctest::Approx(std::log(100.0)).epsilon(1e-12));
  }
  SUBCASE("one perfect, one uniform: the average") {
    TapeD tape;
    std::vector<ViewLogits<double>> views{{perfect(tape), &m1}, {uniform(tape), &m2}};
    CHECK(tape.scalar_value(masked_prediction_loss<double>(tape, views, labels)) ==
          doctest::Approx(0.5 * std::log(100.0)).epsilon(1e-9));
  }
  SUBCASE("empty mask propagates the contract error") {
    TapeD tape;
    MaskSpec empty;
    empty.masked.assign(static_cast<size_t>(T), 0);
    std::vector<ViewLogits<double>> views{{uniform(tape), &empty}};
    CHECK_THROWS_AS(masked_prediction_loss<double>(tape, views, labels), ContractError);
  }
}

TEST_CASE("contrastive_loss closed forms") {
  const int64_t T = 21;  // 20 negatives available per anchor
  const double k = 0.1;

  SUBCASE("identical views with orthogonal negatives") {
    TapeD tape;
    const auto basis = orthonormal_rows(T);
    auto r1 = leaf_of(tape, basis, false);
    auto r2 = leaf_of(tape, basis, false);
    const auto loss =
        contrastive_loss<double>(tape, r1, r2, all_other_negatives(T), k);
    const double expect = std::log1p(20.0 * std::exp(-10.0));  // ~9.08e-4
    CHECK(tape.scalar_value(loss) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(tape.scalar_value(loss) == doctest::Approx(9.0799859e-4).epsilon(1e-3));
  }

  SUBCASE("orthogonal positives with identical-to-anchor negatives") {
    TapeD tape;
    Mat<double> m1(T, 2), m2(T, 2);
    for (int64_t t = 0; t < T; ++t) {
      m1.at(t, 0) = 1.0;  // every row of view 1 is u
      m2.at(t, 1) = 1.0;  // every row of view 2 is v, orthogonal to u
    }
    auto r1 = leaf_of(tape, m1, false);
    auto r2 = leaf_of(tape, m2, false);
    const auto loss =
        contrastive_loss<double>(tape, r1, r2, all_other_negatives(T), k);
    const double expect = std::log(1.0 + 20.0 * std::exp(10.0));  // ~13.0
    CHECK(tape.scalar_value(loss) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(expect == doctest::Approx(13.0).epsilon(0.01));
  }

  SUBCASE("invariant under uniform positive rescaling") {
    Rng rng(8);
    Mat<double> m1(12, 5), m2(12, 5);
    for (auto& v : m1.v) v = rng.gaussian();
    for (auto& v : m2.v) v = rng.gaussian();
    Rng nrng(9);
    const auto negs = sample_negatives_all(12, 6, nrng);
    auto eval = [&](double c) {
      TapeD tape;
      Mat<double> s1 = m1, s2 = m2;
      for (auto& v : s1.v) v *= c;
      for (auto& v : s2.v) v *= c;
      return tape.scalar_value(contrastive_loss<double>(
          tape, leaf_of(tape, s1, false), leaf_of(tape, s2, false), negs, 0.1));
    };
    CHECK(eval(1.0) == doctest::Approx(eval(7.5)).epsilon(1e-9));
    CHECK(eval(1.0) == doctest::Approx(eval(0.02)).epsilon(1e-6));
  }

  SUBCASE("loss decreases strictly as the positive similarity rises") {
    // Anchor e1, positive rotated toward it, negatives fixed at e3.
    double prev = -1.0;
    for (const double cs : {0.0, 0.25, 0.5, 0.75, 0.95}) {
      TapeD tape;
      const int64_t n = 4;
      Mat<double> m1(n, 3), m2(n, 3);
      for (int64_t t = 0; t < n; ++t) {
        m1.at(t, 0) = 1.0;
        m2.at(t, 0) = cs;
        m2.at(t, 1) = std::sqrt(1.0 - cs * cs);
      }
      // One negative per anchor: the next row (identical direction to the
      // anchor in view 1 -> fixed similarity 1 among same-view rows).
      std::vector<std::vector<int32_t>> negs(static_cast<size_t>(n));
      for (int64_t t = 0; t < n; ++t)
        negs[static_cast<size_t>(t)] = {static_cast<int32_t>((t + 1) % n)};
      const double loss = tape.scalar_value(contrastive_loss<double>(
          tape, leaf_of(tape, m1, false), leaf_of(tape, m2, false), negs, 0.1));
      if (prev >= 0.0) CHECK(loss < prev);
      prev = loss;
    }
  }

  SUBCASE("anchor inside its own negatives is rejected") {
    TapeD tape;
    const auto basis = orthonormal_rows(4);
    auto r1 = leaf_of(tape, basis, false);
    auto r2 = leaf_of(tape, basis, false);
    std::vector<std::vector<int32_t>> bad{{1}, {1}, {0}, {2}};
    CHECK_THROWS_AS(contrastive_loss<double>(tape, r1, r2, bad, 0.1), ContractError);
    std::vector<std::vector<int32_t>> oob{{1}, {2}, {9}, {0}};
    CHECK_THROWS_AS(contrastive_loss<double>(tape, r1, r2, oob, 0.1), IndexError);
  }

  SUBCASE("literal printed form is exposed for comparison") {
    TapeD tape;
    const auto basis = orthonormal_rows(T);
    auto r1 = leaf_of(tape, basis, false);
    auto r2 = leaf_of(tape, basis, false);
    const auto lit = contrastive_loss<double>(tape, r1, r2, all_other_negatives(T),
                                              k, ContrastiveForm::kLiteralRatio);
    // Each term: exp(10) / (exp(10) + 20), summed over 21 anchors and both
    // directions.
    const double per = std::exp(10.0) / (std::exp(10.0) + 20.0);
    CHECK(tape.scalar_value(lit) == doctest::Approx(2 * 21 * per).epsilon(1e-9));
  }
}

TEST_CASE("contrastive_loss gradients match finite differences") {
  Rng rng(77);
  const int64_t T = 6;
  const int64_t d = 4;
  Mat<double> m1(T, d), m2(T, d);
  for (auto& v : m1.v) v = rng.gaussian();
  for (auto& v : m2.v) v = rng.gaussian();
  Rng nrng(5);
  const auto negs = sample_negatives_all(T, 3, nrng);

  for (const auto form : {ContrastiveForm::kNtXent, ContrastiveForm::kLiteralRatio}) {
    auto f1 = [&](const std::vector<double>& x) {
      TapeD tape;
      auto r1 = tape.leaf(T, d, x, true);
      auto r2 = tape.leaf(T, d, m2.v, false);
      return tape.scalar_value(contrastive_loss<double>(tape, r1, r2, negs, 0.1, form));
    };
    TapeD tape;
    auto r1 = tape.leaf(T, d, m1.v, true);
    auto r2 = tape.leaf(T, d, m2.v, true);
    auto loss = contrastive_loss<double>(tape, r1, r2, negs, 0.1, form);
    tape.backward(loss);
    CHECK(fd_max_rel_err(f1, m1.v, {tape.grad(r1).begin(), tape.grad(r1).end()}) < 1e-4);

    auto f2 = [&](const std::vector<double>& x) {
      TapeD t2;
      auto rr1 = t2.leaf(T, d, m1.v, false);
      auto rr2 = t2.leaf(T, d, x, true);
      return t2.scalar_value(contrastive_loss<double>(t2, rr1, rr2, negs, 0.1, form));
    };
    CHECK(fd_max_rel_err(f2, m2.v, {tape.grad(r2).begin(), tape.grad(r2).end()}) < 1e-4);
  }
}

TEST_CASE("sample_negatives") {
  SUBCASE("forced full set when T-1 equals the request") {
    Rng rng(1);
    auto negs = sample_negatives(3, 1, 2, rng);
    std::sort(negs.begin(), negs.end());
    CHECK(negs == std::vector<int32_t>{0, 2});
  }
  SUBCASE("the anchor never appears") {
    Rng rng(2);
    for (int it = 0; it < 10000; ++it) {
      const int64_t T = 5 + rng.uniform_int(20);
      const int64_t t = rng.uniform_int(T);
      const auto negs = sample_negatives(T, t, 4, rng);
      for (const int32_t v : negs) CHECK(v != t);
    }
  }
  SUBCASE("same seed, same sets") {
    Rng r1(3), r2(3);
    CHECK(sample_negatives_all(14, 5, r1) == sample_negatives_all(14, 5, r2));
  }
  SUBCASE("short utterances reduce the count to T-1") {
    Rng rng(4);
    const auto negs = sample_negatives(4, 2, 20, rng);
    CHECK(negs.size() == 3);
  }
}

TEST_CASE("lambda schedule and combined loss") {
  LambdaSchedule sched;
  sched.lambda_max = 10.0;
  sched.total_steps = 1000;
  CHECK(sched(0) == 0.0);
  CHECK(sched(500) == doctest::Approx(5.0));
  CHECK(sched(1000) == doctest::Approx(10.0));
  CHECK(sched(5000) == doctest::Approx(10.0));
  for (int64_t a = 0; a < 1200; a += 37) {
    for (int64_t b = a; b < 1200; b += 91) CHECK(sched(a) <= sched(b));
  }

  TapeD tape;
  auto pred = tape.scalar(2.0);
  auto contr = tape.scalar(0.3);
  CHECK(tape.scalar_value(combined_loss<double>(tape, pred, contr, 0, sched)) ==
        doctest::Approx(2.0));
  CHECK(tape.scalar_value(combined_loss<double>(tape, pred, contr, 1000, sched)) ==
        doctest::Approx(2.0 + 10.0 * 0.3));
  Tensor<double> absent;  // variant without the contrastive term
  CHECK(tape.scalar_value(combined_loss<double>(tape, pred, absent, 700, sched)) ==
        doctest::Approx(2.0));
}

TEST_CASE("tap-layer contract: gradients stop at the tap") {
  ModelConfig cfg;
  cfg.num_encoder_layers = 3;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 16;
  cfg.predictor_layers = 1;
  cfg.layer_drop_p = 0.0;
  cfg.num_classes = 4;
  cfg.speaker_embed_dim = 4;
  cfg.final_proj_dim = 4;
  cfg.contrastive_layer = 2;
  const auto params = init_model_params<double>(cfg, 5, 2, 3);

  Rng rng(9);
  Mat<float> f1(7, 5), f2(7, 5);
  for (auto& v : f1.v) v = static_cast<float>(rng.gaussian());
  for (auto& v : f2.v) v = static_cast<float>(rng.gaussian());

  TapeD tape;
  auto leaves = register_params(tape, params);
  const auto o1 = encode(tape, f1, nullptr, leaves, {});
  const auto o2 = encode(tape, f2, nullptr, leaves, {});
  const int tap = cfg.effective_contrastive_layer();
  CHECK(tap == 2);
  Rng nrng(11);
  const auto negs = sample_negatives_all(7, 3, nrng);
  auto loss = contrastive_loss<double>(tape, o1.encoder[static_cast<size_t>(tap)],
                                       o2.encoder[static_cast<size_t>(tap)], negs, 0.1);
  tape.backward(loss);
  // Layers above the tap receive nothing from a contrastive-only loss.
  for (const double g : tape.grad(leaves.of("enc3.wq"))) CHECK(g == 0.0);
  for (const double g : tape.grad(leaves.of("proj_w"))) CHECK(g == 0.0);
  double below = 0;
  for (const double g : tape.grad(leaves.of("enc1.wq"))) below += g * g;
  for (const double g : tape.grad(leaves.of("enc2.wq"))) below += g * g;
  CHECK(below > 0.0);
}

// Full combined training loss on a two-layer toy model, checked against
// central finite differences over every parameter.
TEST_CASE("toy-model combined loss matches finite differences everywhere") {
  ModelConfig cfg;
  cfg.num_encoder_layers = 2;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 12;
  cfg.predictor_layers = 2;
  cfg.layer_drop_p = 0.0;
  cfg.num_classes = 5;
  cfg.speaker_embed_dim = 4;
  cfg.final_proj_dim = 6;
  cfg.contrastive_layer = 1;
  cfg.logit_temperature = 0.5;  // keep the loss surface well-conditioned for FD
  const int D = 5;
  const int64_t T = 9;
  const auto params0 = init_model_params<double>(cfg, D, 3, 21);

  Rng rng(31);
  Mat<float> view1(T, D), view2(T, D);
  for (auto& v : view1.v) v = static_cast<float>(rng.gaussian());
  for (auto& v : view2.v) v = static_cast<float>(rng.gaussian());
  Rng mrng(33);
  const auto mask1 = sample_mask(T, 0.3, 2, mrng);
  const auto mask2 = sample_mask(T, 0.3, 2, mrng);
  std::vector<int32_t> labels(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t)
    labels[static_cast<size_t>(t)] = static_cast<int32_t>(mrng.uniform_int(cfg.num_classes));
  Rng nrng(35);
  const auto negs = sample_negatives_all(T, 4, nrng);
  LambdaSchedule sched;
  sched.lambda_max = 10.0;
  sched.total_steps = 100;
  const int64_t step = 37;

  auto flatten = [](const ModelParams<double>& p) {
    std::vector<double> flat;
    for (const auto& b : p.bufs) flat.insert(flat.end(), b.data.begin(), b.data.end());
    return flat;
  };
  auto unflatten = [&](const std::vector<double>& flat) {
    ModelParams<double> p = params0;
    size_t off = 0;
    for (auto& b : p.bufs) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + b.data.size()),
                b.data.begin());
      off += b.data.size();
    }
    return p;
  };

  auto loss_of = [&](const ModelParams<double>& p, TapeD& tape,
                     std::vector<std::pair<Tensor<double>, const ParamBuf<double>*>>* out_leaves) {
    auto leaves = register_params(tape, p);
    const auto o1 = encode(tape, view1, &mask1, leaves, {});
    const auto o2 = encode(tape, view2, &mask2, leaves, {});
    const auto p1 = predict(tape, o1.encoder.back(), 1, leaves);
    const auto p2 = predict(tape, o2.encoder.back(), 1, leaves);
    std::vector<ViewLogits<double>> views{{p1.logits, &mask1}, {p2.logits, &mask2}};
    auto pred_loss = masked_prediction_loss<double>(tape, views, labels);
    const int tap = cfg.effective_contrastive_layer();
    auto contr = contrastive_loss<double>(tape, o1.encoder[static_cast<size_t>(tap)],
                                          o2.encoder[static_cast<size_t>(tap)], negs, 0.1);
    auto total = combined_loss<double>(tape, pred_loss, contr, step, sched);
    if (out_leaves != nullptr) {
      for (size_t i = 0; i < leaves.leaves.size(); ++i)
        out_leaves->push_back({leaves.leaves[i], &p.bufs[i]});
    }
    return total;
  };

  // Analytic gradient.
  TapeD tape;
  std::vector<std::pair<Tensor<double>, const ParamBuf<double>*>> leaf_info;
  auto loss = loss_of(params0, tape, &leaf_info);
  tape.backward(loss);
  std::vector<double> grad;
  for (const auto& [leaf, buf] : leaf_info) {
    const auto g = tape.grad(leaf);
    grad.insert(grad.end(), g.begin(), g.end());
  }

  const auto x0 = flatten(params0);
  REQUIRE(x0.size() == grad.size());
  auto f = [&](const std::vector<double>& x) {
    TapeD t2;
    return t2.scalar_value(loss_of(unflatten(x), t2, nullptr));
  };
  CHECK(fd_max_rel_err(f, x0, grad) < 1e-4);
}
