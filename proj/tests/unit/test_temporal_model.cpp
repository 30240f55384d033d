#include <gtest/gtest.h>

#include "affect/errors.hpp"
#include "affect/objectives.hpp"
#include "affect/temporal_model.hpp"
#include "gradcheck.hpp"

using namespace affect;
using affect::testing::random_tensor;

namespace {

TemporalModelConfig tiny(Task task, double dropout = 0.0) {
  TemporalModelConfig cfg;
  cfg.task = task;
  cfg.feature_dim = 8;
  cfg.tcn = TcnConfig::dilated_stack(8, 3, {1, 2}, dropout);
  cfg.encoder = {1, 2, 8, 16, dropout};
  cfg.head_hidden = 8;
  cfg.head_dropout = dropout;
  return cfg;
}

}  // namespace

TEST(Tcn, ReceptiveFieldOfDefaultStack) {
  EXPECT_EQ(TcnConfig::dilated_stack(64, 3, {1, 2, 4, 8}, 0.3).receptive_field(), 31u);
  EXPECT_EQ(TcnConfig::dilated_stack(64, 5, {1, 2, 4, 8}, 0.3).receptive_field(), 61u);
}

TEST(Tcn, PreservesLength) {
  Rng rng(0);
  Tcn tcn(5, TcnConfig::dilated_stack(7, 3, {1, 2, 4, 8}, 0.0), rng);
  auto y = tcn.forward(random_tensor({13, 5}, rng, -1, 1, false), nn::RunMode::eval());
  EXPECT_EQ(y.shape(), (Shape{13, 7}));
  EXPECT_EQ(tcn.output_dim(), 7u);
}

TEST(Tcn, ZeroWeightsWithResidualIsIdentity) {
  Rng rng(1);
  Tcn tcn(6, TcnConfig::dilated_stack(6, 3, {1, 2, 4}, 0.0), rng);
  for (auto& layer : tcn.layers()) {
    for (auto& v : layer.weight.mutable_data()) v = 0.0;
    for (auto& v : layer.bias.mutable_data()) v = 0.0;
  }
  auto x = random_tensor({9, 6}, rng, -1, 1, false);
  auto y = tcn.forward(x, nn::RunMode::eval());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Tcn, ChannelMismatchNeedsProjection) {
  auto cfg = TcnConfig::dilated_stack(6, 3, {1}, 0.0);
  cfg.project_on_mismatch = false;
  EXPECT_THROW(cfg.validate(4), ConfigError);
  EXPECT_NO_THROW(cfg.validate(6));
  cfg.project_on_mismatch = true;
  EXPECT_NO_THROW(cfg.validate(4));
}

TEST(Tcn, RejectsEvenKernel) {
  EXPECT_THROW(TcnConfig::dilated_stack(6, 4, {1}, 0.0).validate(6), ConfigError);
}

TEST(TemporalModel, OutputWidthPerTask) {
  Rng rng(2);
  auto x = random_tensor({10, 8}, rng, -1, 1, false);
  EXPECT_EQ(TemporalModel(tiny(Task::VA), rng).forward(x, {}, nn::RunMode::eval()).shape(), (Shape{10, 2}));
  EXPECT_EQ(TemporalModel(tiny(Task::Expr), rng).forward(x, {}, nn::RunMode::eval()).shape(), (Shape{10, 8}));
  EXPECT_EQ(TemporalModel(tiny(Task::AU), rng).forward(x, {}, nn::RunMode::eval()).shape(), (Shape{10, 12}));
}

TEST(TemporalModel, ValenceArousalIsBounded) {
  Rng rng(3);
  TemporalModel model(tiny(Task::VA), rng);
  auto y = model.forward(random_tensor({20, 8}, rng, -50, 50, false), {}, nn::RunMode::eval());
  for (double v : y.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(TemporalModel, EvalForwardIsDeterministic) {
  Rng rng(4);
  TemporalModel model(tiny(Task::VA, 0.3), rng);
  auto x = random_tensor({12, 8}, rng, -1, 1, false);
  auto a = model.forward(x, {}, nn::RunMode::eval());
  auto b = model.forward(x, {}, nn::RunMode::eval());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST(TemporalModel, TrainingDropoutChangesOutput) {
  Rng rng(5);
  TemporalModel model(tiny(Task::VA, 0.3), rng);
  auto x = random_tensor({12, 8}, rng, -1, 1, false);
  Rng drop(9);
  auto a = model.forward(x, {}, nn::RunMode::eval());
  auto b = model.forward(x, {}, nn::RunMode::train(drop));
  double diff = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.at(i) - b.at(i));
  EXPECT_GT(diff, 0.0);
}

TEST(TemporalModel, GradientThroughEveryLoss) {
  const std::size_t n = 6;
  for (Task task : {Task::VA, Task::Expr, Task::AU}) {
    SCOPED_TRACE(task_name(task));
    Rng rng(6);
    TemporalModel model(tiny(task), rng);
    auto x = random_tensor({n, 8}, rng, -1, 1, false);
    std::vector<bool> mask(n, true);
    std::vector<double> va_target;
    for (std::size_t i = 0; i < n * 2; ++i) va_target.push_back(std::uniform_real_distribution<double>(-1, 1)(rng));
    std::vector<int> ids{0, 3, 7, 2, 3, 5};
    std::vector<int> units;
    for (std::size_t i = 0; i < n * 12; ++i) units.push_back(static_cast<int>(rng() % 2));
    auto loss = [&] {
      auto out = model.forward(x, mask, nn::RunMode::eval());
      switch (task) {
        case Task::VA: return va_loss(out, Tensor::from_vector({n, 2}, va_target), mask);
        case Task::Expr: return expr_loss(out, ids, mask);
        default: return au_loss(out, units, mask);
      }
    };
    auto r = affect::testing::grad_check(loss, model.parameters(), 1e-5, 4, 17);
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_GT(r.entries, 0u);
  }
}

TEST(TemporalModel, PaddedWindowMatchesTruncatedSequence) {
  Rng rng(7);
  TemporalModel model(tiny(Task::VA), rng);
  const std::size_t real = 7, window = 10;
  auto x = random_tensor({window, 8}, rng, -1, 1, false);
  std::vector<bool> mask(window, false);
  for (std::size_t i = 0; i < real; ++i) mask[i] = true;
  auto noisy = x.clone();
  for (std::size_t i = real * 8; i < window * 8; ++i) noisy.mutable_data()[i] = 1e3;
  auto a = model.forward(x, mask, nn::RunMode::eval());
  auto b = model.forward(noisy, mask, nn::RunMode::eval());
  auto c = model.forward(narrow(x, 0, 0, real), {}, nn::RunMode::eval());
  for (std::size_t i = 0; i < real * 2; ++i) {
    EXPECT_NEAR(a.at(i), b.at(i), 1e-12);
    EXPECT_NEAR(a.at(i), c.at(i), 1e-9);
  }
}

TEST(TemporalModel, ConfigRoundTripsThroughKeyValues) {
  auto cfg = tiny(Task::AU, 0.2);
  cfg.tcn = TcnConfig::dilated_stack(12, 5, {1, 3}, 0.2);
  KeyValues kv;
  cfg.to_keyvalues(kv);
  auto back = TemporalModelConfig::from_keyvalues(kv);
  EXPECT_EQ(back.task, Task::AU);
  EXPECT_EQ(back.feature_dim, 8u);
  ASSERT_EQ(back.tcn.layers.size(), 2u);
  EXPECT_EQ(back.tcn.layers[1].dilation, 3u);
  EXPECT_EQ(back.tcn.layers[1].kernel, 5u);
  EXPECT_EQ(back.tcn.layers[1].channels, 12u);
  EXPECT_EQ(back.encoder.depth, 1u);
  EXPECT_EQ(back.encoder.heads, 2u);
  EXPECT_DOUBLE_EQ(back.tcn.dropout, 0.2);
  EXPECT_EQ(back.head_hidden, 8u);
  Rng a(1), b(1);
  EXPECT_EQ(TemporalModel(cfg, a).parameter_count(), TemporalModel(back, b).parameter_count());
}
