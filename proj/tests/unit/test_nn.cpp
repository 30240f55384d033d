#include <gtest/gtest.h>

#include <cmath>

#include "affect/errors.hpp"
#include "affect/nn.hpp"
#include "gradcheck.hpp"

using namespace affect;
using affect::testing::random_tensor;

namespace {

nn::EncoderConfig small_encoder() { return {2, 2, 8, 16, 0.0}; }

}  // namespace

TEST(Linear, ComputesAffineMap) {
  Rng rng(0);
  nn::Linear lin(2, 1, rng);
  lin.weight().mutable_data()[0] = 2.0;
  lin.weight().mutable_data()[1] = -1.0;
  lin.bias().mutable_data()[0] = 0.5;
  auto y = lin.forward(Tensor::from_vector({1, 2}, {3, 4}));
  EXPECT_DOUBLE_EQ(y.item(), 2.5);
}

TEST(Linear, ParametersAreNamedInOrder) {
  Rng rng(0);
  nn::Linear lin(3, 4, rng);
  auto named = lin.named_parameters();
  ASSERT_EQ(named.size(), 2u);
  EXPECT_EQ(named[0].first, "weight");
  EXPECT_EQ(named[1].first, "bias");
  EXPECT_EQ(lin.parameter_count(), 16u);
}

TEST(Positions, SinOnEvenCosOnOdd) {
  auto pe = nn::sinusoidal_positions(5, 6);
  EXPECT_EQ(pe.shape(), (Shape{5, 6}));
  for (std::size_t c = 0; c < 6; ++c) EXPECT_DOUBLE_EQ(pe.at(0, c), c % 2 == 0 ? 0.0 : 1.0);
  double freq = std::pow(10000.0, -2.0 / 6.0);
  EXPECT_NEAR(pe.at(3, 2), std::sin(3 * freq), 1e-12);
  EXPECT_NEAR(pe.at(3, 3), std::cos(3 * freq), 1e-12);
}

TEST(Attention, RowsSumToOne) {
  Rng rng(1);
  nn::MultiHeadSelfAttention attn(8, 2, rng);
  auto x = random_tensor({6, 8}, rng, -1, 1, false);
  std::vector<Tensor> weights;
  attn.forward(x, {}, &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const auto& w : weights) {
    ASSERT_EQ(w.shape(), (Shape{6, 6}));
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 6; ++c) total += w.at(r, c);
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Attention, SingleValidKeyTakesAllWeight) {
  Rng rng(2);
  nn::MultiHeadSelfAttention attn(8, 2, rng);
  auto x = random_tensor({5, 8}, rng, -1, 1, false);
  std::vector<bool> mask{true, false, false, false, false};
  std::vector<Tensor> weights;
  auto y = attn.forward(x, mask, &weights);
  for (const auto& w : weights)
    for (std::size_t r = 0; r < 5; ++r) {
      EXPECT_DOUBLE_EQ(w.at(r, 0), 1.0);
      for (std::size_t c = 1; c < 5; ++c) EXPECT_EQ(w.at(r, c), 0.0);
    }
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(r, c), y.at(0, c), 1e-12);
}

TEST(Attention, HeadsMustDivideWidth) {
  Rng rng(0);
  EXPECT_THROW(nn::MultiHeadSelfAttention(10, 3, rng), ConfigError);
}

TEST(Attention, Gradient) {
  Rng rng(3);
  nn::MultiHeadSelfAttention attn(4, 2, rng);
  auto x = random_tensor({4, 4}, rng);
  auto params = attn.parameters();
  params.push_back(x);
  std::vector<bool> mask{true, true, true, false};
  auto r = affect::testing::grad_check([&] { return affect::testing::random_projection(attn.forward(x, mask), 5); }, params);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Encoder, PaddedTailDoesNotLeak) {
  Rng rng(4);
  nn::TransformerEncoder enc(small_encoder(), rng);
  const std::size_t real = 5, window = 8;
  auto base = random_tensor({window, 8}, rng, -1, 1, false);
  std::vector<bool> mask(window, false);
  for (std::size_t i = 0; i < real; ++i) mask[i] = true;

  auto other = base.clone();
  for (std::size_t i = real * 8; i < window * 8; ++i) other.mutable_data()[i] = 100.0 + i;
  auto y1 = enc.forward(base, mask, nn::RunMode::eval());
  auto y2 = enc.forward(other, mask, nn::RunMode::eval());
  auto truncated = enc.forward(narrow(base, 0, 0, real), {}, nn::RunMode::eval());
  for (std::size_t r = 0; r < real; ++r)
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_NEAR(y1.at(r, c), y2.at(r, c), 1e-12);
      EXPECT_NEAR(y1.at(r, c), truncated.at(r, c), 1e-6);
    }
}

TEST(Encoder, EvalIsDeterministic) {
  Rng rng(5);
  auto cfg = small_encoder();
  cfg.dropout = 0.5;
  nn::TransformerEncoder enc(cfg, rng);
  auto x = random_tensor({4, 8}, rng, -1, 1, false);
  auto a = enc.forward(x, {}, nn::RunMode::eval());
  auto b = enc.forward(x, {}, nn::RunMode::eval());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST(Encoder, KeepsShape) {
  Rng rng(6);
  nn::TransformerEncoder enc(small_encoder(), rng);
  EXPECT_EQ(enc.forward(Tensor::zeros({7, 8}), {}, nn::RunMode::eval()).shape(), (Shape{7, 8}));
}

TEST(Encoder, RejectsBadConfig) {
  nn::EncoderConfig cfg = small_encoder();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_encoder();
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(KeyPaddingBias, ZeroOrMinusInfinity) {
  auto b = nn::key_padding_bias({true, false});
  EXPECT_EQ(b.at(0), 0.0);
  EXPECT_TRUE(std::isinf(b.at(1)) && b.at(1) < 0);
}
