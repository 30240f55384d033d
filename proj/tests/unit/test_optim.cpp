#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "affect/errors.hpp"
#include "affect/ops.hpp"
#include "affect/optim.hpp"

using namespace affect;

namespace {

Tensor param_with_grad(std::vector<double> values, std::vector<double> grad) {
  auto p = Tensor::from_vector({values.size()}, values, true);
  auto g = p.mutable_grad();
  std::copy(grad.begin(), grad.end(), g.begin());
  return p;
}

}  // namespace

TEST(Schedule, WarmupPeakAndDecay) {
  OptimConfig cfg;
  cfg.lr_peak = 1e-3;
  ScheduleState s{0, 10, 110};
  EXPECT_EQ(lr_at(s, cfg), 0.0);
  s.step = 5;
  EXPECT_NEAR(lr_at(s, cfg), 5e-4, 1e-15);
  s.step = 10;
  EXPECT_NEAR(lr_at(s, cfg), 1e-3, 1e-15);
  s.step = 60;
  EXPECT_NEAR(lr_at(s, cfg), 5e-4, 1e-15);
  s.step = 110;
  EXPECT_NEAR(lr_at(s, cfg), 0.0, 1e-15);
  s.step = 500;
  EXPECT_NEAR(lr_at(s, cfg), 0.0, 1e-15);
}

TEST(Schedule, ContinuousAndBounded) {
  OptimConfig cfg;
  cfg.lr_peak = 2.0;
  ScheduleState s{0, 40, 400};
  double prev = lr_at(s, cfg);
  for (s.step = 1; s.step <= 400; ++s.step) {
    double lr = lr_at(s, cfg);
    EXPECT_GE(lr, 0.0);
    EXPECT_LE(lr, 2.0);
    EXPECT_LT(std::abs(lr - prev), 2.0 / 40 + 1e-12) << "step " << s.step;
    if (s.step <= 40) {
      EXPECT_GT(lr, prev);
    } else {
      EXPECT_LE(lr, prev);
    }
    prev = lr;
  }
}

TEST(Schedule, SingleEpochIsAllWarmup) {
  OptimConfig cfg;
  cfg.lr_peak = 1.0;
  ScheduleState s{4, 8, 8};
  EXPECT_NEAR(lr_at(s, cfg), 0.5, 1e-15);
  s.step = 8;
  EXPECT_NEAR(lr_at(s, cfg), 1.0, 1e-15);
  EXPECT_THROW(lr_at({1, 9, 8}, cfg), ContractError);
}

TEST(AdamW, FirstStepMovesBySignOfGradient) {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  const double lr = 0.01;
  std::vector<Tensor> params{param_with_grad({1.0, -2.0, 0.5}, {0.3, -4.0, 1e-3})};
  AdamWMoments m;
  adamw_step(params, m, cfg, lr);
  EXPECT_NEAR(params[0].at(0), 1.0 - lr, 1e-8);
  EXPECT_NEAR(params[0].at(1), -2.0 + lr, 1e-8);
  EXPECT_NEAR(params[0].at(2), 0.5 - lr, 2e-7);
}

TEST(AdamW, DecayShrinksWithZeroGradient) {
  OptimConfig cfg;
  cfg.weight_decay = 0.1;
  const double lr = 0.05;
  std::vector<Tensor> params{param_with_grad({2.0, -3.0}, {0.0, 0.0})};
  AdamWMoments m;
  adamw_step(params, m, cfg, lr);
  EXPECT_NEAR(params[0].at(0), 2.0 * (1 - lr * 0.1), 1e-15);
  EXPECT_NEAR(params[0].at(1), -3.0 * (1 - lr * 0.1), 1e-15);
}

TEST(AdamW, ZeroGradientAndNoDecayLeavesParameters) {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<Tensor> params{param_with_grad({2.0, -3.0}, {0.0, 0.0}),
                             Tensor::from_vector({1}, {7.0}, true)};
  AdamWMoments m;
  for (int i = 0; i < 3; ++i) adamw_step(params, m, cfg, 0.1);
  EXPECT_EQ(params[0].at(0), 2.0);
  EXPECT_EQ(params[0].at(1), -3.0);
  EXPECT_EQ(params[1].at(0), 7.0);
}

TEST(AdamW, WithoutDecayEqualsAdam) {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  Rng rng(3);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> init(20);
  for (auto& v : init) v = n(rng);
  std::vector<Tensor> a{Tensor::from_vector({20}, init, true)};
  std::vector<Tensor> b{Tensor::from_vector({20}, init, true)};
  AdamWMoments ma, mb;
  for (int step = 0; step < 50; ++step) {
    std::vector<double> g(20);
    for (auto& v : g) v = n(rng);
    std::copy(g.begin(), g.end(), a[0].mutable_grad().begin());
    std::copy(g.begin(), g.end(), b[0].mutable_grad().begin());
    adamw_step(a, ma, cfg, 1e-2);
    adam_step(b, mb, cfg, 1e-2);
  }
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(a[0].at(i), b[0].at(i), 1e-12);
}

TEST(AdamW, DecayIsDecoupledFromAdam) {
  OptimConfig cfg;
  cfg.weight_decay = 0.5;
  std::vector<Tensor> a{param_with_grad({1.0}, {0.2})};
  std::vector<Tensor> b{param_with_grad({1.0}, {0.2})};
  AdamWMoments ma, mb;
  adamw_step(a, ma, cfg, 0.1);
  adam_step(b, mb, cfg, 0.1);
  EXPECT_GT(std::abs(a[0].at(0) - b[0].at(0)), 1e-4);
}

TEST(AdamW, NonFiniteGradientThrows) {
  OptimConfig cfg;
  std::vector<Tensor> params{param_with_grad({1.0}, {std::numeric_limits<double>::quiet_NaN()})};
  AdamWMoments m;
  EXPECT_THROW(adamw_step(params, m, cfg, 0.1), NumericalError);
  params = {param_with_grad({1.0}, {std::numeric_limits<double>::infinity()})};
  AdamWMoments m2;
  EXPECT_THROW(adamw_step(params, m2, cfg, 0.1), NumericalError);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  std::vector<Tensor> params{param_with_grad({0, 0}, {3, 0}), param_with_grad({0}, {4})};
  EXPECT_NEAR(clip_grad_norm(params, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(params[0].grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(params[1].grad()[0], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(params, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(params[1].grad()[0], 0.8, 1e-12);
}

TEST(OptimConfig, Validation) {
  OptimConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lr_peak = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AdamW, MinimizesQuadratic) {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.grad_clip = 0.0;
  auto x = Tensor::from_vector({2}, {3.0, -2.0}, true);
  AdamW opt({x}, cfg);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    auto g = x.mutable_grad();
    g[0] = 2 * (x.at(0) - 1.0);
    g[1] = 2 * (x.at(1) + 0.5);
    opt.step(0.05);
  }
  EXPECT_NEAR(x.at(0), 1.0, 1e-2);
  EXPECT_NEAR(x.at(1), -0.5, 1e-2);
}
