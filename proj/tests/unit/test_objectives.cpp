#include <gtest/gtest.h>

#include <cmath>

#include "affect/errors.hpp"
#include "affect/objectives.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace affect;

namespace {

std::vector<double> uniform(std::size_t n, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Ccc, HandValues) {
  std::vector<double> x{1, 2, 3};
  EXPECT_NEAR(ccc(x, x), 1.0, 1e-15);
  EXPECT_NEAR(ccc(x, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(ccc(x, std::vector<double>{2, 3, 4}), 4.0 / 7.0, 1e-15);
}

TEST(Ccc, ConstantEqualSeriesIsUndefined) {
  std::vector<double> c{0.5, 0.5, 0.5};
  EXPECT_THROW(ccc(c, c), UndefinedStatisticError);
  EXPECT_THROW(ccc_tensor(Tensor::from_vector({3}, c), Tensor::from_vector({3}, c)), UndefinedStatisticError);
}

TEST(Ccc, ConstantSeriesWithDifferentMeansIsZero) {
  EXPECT_EQ(ccc(std::vector<double>{1, 1}, std::vector<double>{2, 2}), 0.0);
}

TEST(Ccc, NeedsTwoMatchedValues) {
  EXPECT_THROW(ccc(std::vector<double>{1}, std::vector<double>{1}), ContractError);
  EXPECT_THROW(ccc(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ContractError);
}

TEST(Ccc, MatchesRawMomentOracle) {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::size_t n = 2 + rng() % 200;
    auto x = uniform(n, rng), y = uniform(n, rng, -0.5, 1.5);
    double want = affect::testing::direct_ccc(x, y);
    EXPECT_NEAR(ccc(x, y), want, 1e-8);
    EXPECT_NEAR(ccc_tensor(Tensor::from_vector({n}, x), Tensor::from_vector({n}, y)).item(), want, 1e-8);
  }
}

TEST(Ccc, Properties) {
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto x = uniform(40, rng), y = uniform(40, rng);
    double base = ccc(x, y);
    EXPECT_GE(base, -1.0);
    EXPECT_LE(base, 1.0);
    EXPECT_NEAR(ccc(y, x), base, 1e-12);
    std::vector<double> xs = x, ys = y, xk = x, yk = y;
    for (std::size_t i = 0; i < 40; ++i) {
      xs[i] += 3.0, ys[i] += 3.0;
      xk[i] *= 2.5, yk[i] *= 2.5;
    }
    EXPECT_NEAR(ccc(xs, ys), base, 1e-10);
    EXPECT_NEAR(ccc(xk, yk), base, 1e-10);
  }
}

TEST(Ccc, TensorGradient) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto x = affect::testing::random_tensor({15}, rng), y = affect::testing::random_tensor({15}, rng);
    auto r = affect::testing::grad_check([&] { return ccc_tensor(x, y); }, {x, y});
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(VaLoss, OppositePredictionsCostTwo) {
  auto t = Tensor::from_vector({3, 2}, {1, 3, 2, 2, 3, 1});
  auto p = Tensor::from_vector({3, 2}, {3, 1, 2, 2, 1, 3});
  EXPECT_NEAR(va_loss(p, t, {true, true, true}).item(), 2.0, 1e-12);
  EXPECT_NEAR(va_loss(t, t, {true, true, true}).item(), 0.0, 1e-12);
}

TEST(VaLoss, MaskedRowsAreIgnored) {
  auto t = Tensor::from_vector({4, 2}, {0.1, 0.2, 0.3, -0.1, -0.4, 0.5, 0.9, 0.9});
  auto p = Tensor::from_vector({4, 2}, {0.1, 0.2, 0.3, -0.1, -0.4, 0.5, -7, 7});
  EXPECT_NEAR(va_loss(p, t, {true, true, true, false}).item(), 0.0, 1e-12);
}

TEST(VaLoss, BoundedAndDifferentiable) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto p = affect::testing::random_tensor({10, 2}, rng), t = affect::testing::random_tensor({10, 2}, rng, -1, 1, false);
    std::vector<bool> mask(10, true);
    mask[seed % 10] = false;
    double l = va_loss(p, t, mask).item();
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 2.0);
    auto r = affect::testing::grad_check([&] { return va_loss(p, t, mask); }, {p});
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

TEST(VaLoss, EmptyBatch) {
  EXPECT_THROW(va_loss(Tensor::zeros({2, 2}), Tensor::zeros({2, 2}), {false, false}), EmptyBatchError);
}

TEST(ExprLoss, UniformLogitsCostLogEight) {
  std::vector<int> ids{3, 0};
  EXPECT_NEAR(expr_loss(Tensor::zeros({2, 8}), ids, {true, true}).item(), std::log(8.0), 1e-12);
}

TEST(ExprLoss, SkipsInvalidAndMasked) {
  auto logits = Tensor::from_vector({3, 2}, {0, 0, 100, -100, -100, 100});
  std::vector<int> ids{0, -1, 0};
  EXPECT_NEAR(expr_loss(logits, ids, {true, true, false}).item(), std::log(2.0), 1e-12);
  std::vector<int> none{-1, -1, -1};
  EXPECT_THROW(expr_loss(logits, none, {true, true, true}), EmptyBatchError);
}

TEST(ExprLoss, MatchesOracleAndGradient) {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 12;
    auto logits = affect::testing::random_tensor({n, 8}, rng, -5, 5);
    std::vector<int> ids(n);
    for (auto& id : ids) id = static_cast<int>(rng() % 9) - 1;
    ids[0] = 2;
    std::vector<bool> mask(n, true);
    EXPECT_NEAR(expr_loss(logits, ids, mask).item(), affect::testing::direct_cross_entropy(logits.data(), ids, 8), 1e-8);
    if (seed < 20) {
      auto r = affect::testing::grad_check([&] { return expr_loss(logits, ids, mask); }, {logits});
      EXPECT_LT(r.max_rel_error, 1e-4);
    }
  }
}

TEST(AuLoss, HandValues) {
  std::vector<int> y1{1};
  std::vector<int> y0{0};
  EXPECT_NEAR(au_loss(Tensor::zeros({1, 1}), y1, {true}).item(), -std::log(0.5), 1e-12);
  EXPECT_NEAR(au_loss(Tensor::zeros({1, 1}), y0, {true}).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(au_loss(Tensor::full({1, 1}, 2.0), y1, {true}).item(), 0.1269280110429725, 1e-12);
}

TEST(AuLoss, FusedFormMatchesNaiveOverWideRange) {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 6;
    auto logits = affect::testing::random_tensor({n, 12}, rng, -20, 20);
    std::vector<int> y(n * 12);
    for (auto& v : y) v = static_cast<int>(rng() % 3) - 1;
    y[0] = 1;
    std::vector<bool> mask(n, true);
    EXPECT_NEAR(au_loss(logits, y, mask).item(), affect::testing::direct_bce(logits.data(), y), 1e-8);
    if (seed < 20) {
      auto r = affect::testing::grad_check([&] { return au_loss(logits, y, mask); }, {logits});
      EXPECT_LT(r.max_rel_error, 1e-4);
    }
  }
}

TEST(AuLoss, ExtremeLogitsStayFinite) {
  std::vector<int> y{0, 1};
  auto l = au_loss(Tensor::from_vector({1, 2}, {800, -800}), y, {true}).item();
  EXPECT_NEAR(l, 800.0, 1e-9);
}

TEST(AuLoss, AllInvalidIsEmpty) {
  std::vector<int> y(12, -1);
  EXPECT_THROW(au_loss(Tensor::zeros({1, 12}), y, {true}), EmptyBatchError);
}

TEST(MacroF1, HandExample) {
  std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  auto r = macro_f1(pred, truth, 2);
  EXPECT_NEAR(r.per_class[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[1], 0.8, 1e-12);
  EXPECT_NEAR(r.macro, 0.7333333333333333, 1e-12);
}

TEST(MacroF1, AbsentClassCountsAsZero) {
  std::vector<int> truth{0, 1}, pred{0, 1};
  auto r = macro_f1(pred, truth, 3);
  EXPECT_EQ(r.per_class[2], 0.0);
  EXPECT_NEAR(r.macro, 2.0 / 3.0, 1e-12);
}

TEST(MacroF1, MatchesBruteForce) {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::size_t n = 1 + rng() % 300, classes = 1 + rng() % 8;
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng() % classes);
      truth[i] = static_cast<int>(rng() % classes);
    }
    auto got = macro_f1(pred, truth, classes);
    auto want = affect::testing::brute_macro_f1(pred, truth, classes);
    EXPECT_NEAR(got.macro, want.macro, 1e-12);
    for (std::size_t c = 0; c < classes; ++c) EXPECT_NEAR(got.per_class[c], want.per_class[c], 1e-12);
  }
}

TEST(AuF1, ThresholdsSigmoidAtHalf) {
  std::vector<double> logits{0.0, -0.1};
  std::vector<int> targets{1, 1};
  auto r = au_f1(logits, targets, 1);
  EXPECT_NEAR(r.macro, 2.0 / 3.0, 1e-12);
}

TEST(AuF1, SkipsInvalidTargets) {
  std::vector<int> dec{1, 0, 1, 1}, targets{1, -1, 1, 0};
  auto r = au_f1_decisions(dec, targets, 2);
  EXPECT_NEAR(r.per_class[0], 1.0, 1e-12);
  EXPECT_NEAR(r.per_class[1], 0.0, 1e-12);
}

TEST(MetricReport, JsonRoundTrip) {
  MetricReport r;
  r.task = Task::VA;
  r.fold = 3;
  r.ccc_valence = 0.25;
  r.ccc_arousal = -0.5;
  r.per_class = {0.25, -0.5};
  auto back = MetricReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  EXPECT_EQ(back.task, Task::VA);
  EXPECT_EQ(back.fold, 3);
  EXPECT_EQ(back.ccc_valence, 0.25);
  EXPECT_EQ(back.ccc_arousal, -0.5);
  EXPECT_FALSE(back.macro_f1.has_value());
  EXPECT_EQ(back.per_class, r.per_class);
  EXPECT_DOUBLE_EQ(back.primary(), -0.125);
}

TEST(ScoreFrames, ExprFromLogitsAndDecisions) {
  ScoredFrames logits{{5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 5}, {0, 7}};
  EXPECT_NEAR(*score_frames(Task::Expr, logits, false).macro_f1, 2.0 / 8.0, 1e-12);
  ScoredFrames ids{{0, 7, 3}, {0, 7, -1}};
  EXPECT_NEAR(*score_frames(Task::Expr, ids, true).macro_f1, 2.0 / 8.0, 1e-12);
}

TEST(ScoreFrames, VaSkipsInvalidFrames) {
  ScoredFrames f{{0.1, 0.2, 0.3, 0.1, 0.9, -0.9, 0.5, 0.6}, {0.1, 0.2, 0.3, 0.1, -5, -5, 0.5, 0.6}};
  auto r = score_frames(Task::VA, f, false);
  EXPECT_NEAR(*r.ccc_valence, 1.0, 1e-12);
  EXPECT_NEAR(*r.ccc_arousal, 1.0, 1e-12);
}

TEST(ScorePerVideo, AveragesPerVideoCcc) {
  ScoredFrames a{{.1, .1, .2, .2, .3, .3}, {.1, .1, .2, .2, .3, .3}};
  ScoredFrames b{{.1, .1, .2, .2, .3, .3}, {.2, .2, .3, .3, .4, .4}};
  auto r = score_per_video(Task::VA, {a, b}, false);
  EXPECT_NEAR(*r.ccc_valence, 0.5 * (1.0 + 4.0 / 7.0), 1e-12);
  EXPECT_NEAR(*r.ccc_arousal, 0.5 * (1.0 + 4.0 / 7.0), 1e-12);
  EXPECT_THROW(score_per_video(Task::VA, {}, false), ContractError);
  ScoredFrames all{{.1, .1, .2, .2, .3, .3, .1, .1, .2, .2, .3, .3}, {.1, .1, .2, .2, .3, .3, .2, .2, .3, .3, .4, .4}};
  EXPECT_GT(std::abs(*score_frames(Task::VA, all, false).ccc_valence - *r.ccc_valence), 1e-3);
}
