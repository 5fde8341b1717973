#include <gtest/gtest.h>

#include <cmath>

#include "fluxtft/nn/adam.hpp"
#include "fluxtft/nn/attention.hpp"
#include "fluxtft/nn/gradcheck.hpp"
#include "fluxtft/nn/loss.hpp"
#include "fluxtft/nn/lstm.hpp"
#include "fluxtft/nn/ops.hpp"
#include "fluxtft/tft/layers.hpp"
#include "gradcases.hpp"

using namespace fluxtft;
using namespace fluxtft::nn;

class Primitive : public ::testing::TestWithParam<gradcases::Case> {};

TEST_P(Primitive, GradientMatchesCentralDifferences) {
  const auto rep = GetParam().run();
  EXPECT_LT(rep.max_rel_error, gradcases::kPrimitiveTol) << rep.summary();
}

INSTANTIATE_TEST_SUITE_P(GradCheck, Primitive, ::testing::ValuesIn(gradcases::primitives()),
                         [](const auto& info) { return info.param.name; });

TEST(Ops, SoftmaxSumsToOneAndIsShiftInvariant) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    Vec x(7), y(7), y2(7);
    for (auto& v : x) v = rng.normal(0, 30);
    softmax_forward(x, y);
    double s = 0.0;
    for (double v : y) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (auto& v : x) v += 500.0;
    softmax_forward(x, y2);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(y[i], y2[i], 1e-12);
  }
}

TEST(Ops, AttentionMaskedPositionsGetZeroWeight) {
  Vec q = {0.3, -0.2}, keys = {1, 0, 0, 1, 1, 1};
  Vec w(3);
  attention_weights(q, keys, {1, 0, 1}, w);
  EXPECT_EQ(w[1], 0.0);
  EXPECT_NEAR(w[0] + w[2], 1.0, 1e-15);
  EXPECT_THROW(attention_weights(q, keys, {0, 0, 0}, w), UsageError);
}

TEST(Ops, ShapeErrorsNameTheOperation) {
  ParamStore store;
  Rng rng(1);
  const Dense d = Dense::create(store, "d", 3, 2, rng);
  Vec x(4), y(2);
  try {
    d.forward(x, y);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("dense"), std::string::npos);
  }
  EXPECT_THROW(InterpretableAttention::create(store, "a", 5, 2, rng), UsageError);
  EXPECT_THROW(store.add("d.W", {1}), UsageError);
  const Embedding e = Embedding::create(store, "e", 3, 2, rng);
  EXPECT_THROW(e.forward(3.0, y), UsageError);
}

TEST(Loss, PinballValuesAndGradient) {
  EXPECT_DOUBLE_EQ(quantile_loss(2.0, 1.0, 0.9), 0.9);
  EXPECT_NEAR(quantile_loss(1.0, 2.0, 0.9), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(quantile_loss(3.0, 3.0, 0.25), 0.0);
  EXPECT_EQ(quantile_loss_grad(3.0, 3.0, 0.25), 0.0);
  EXPECT_THROW(quantile_loss(1, 1, 1.0), UsageError);
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    const double y = rng.normal(0, 1), yh = rng.normal(0, 1), q = rng.uniform(0.01, 0.99);
    if (std::abs(y - yh) < 1e-4) continue;
    const double num = (quantile_loss(y, yh + 1e-7, q) - quantile_loss(y, yh - 1e-7, q)) / 2e-7;
    EXPECT_NEAR(quantile_loss_grad(y, yh, q), num, 1e-6);
    // median pinball is half the absolute error
    EXPECT_NEAR(quantile_loss(y, yh, 0.5), 0.5 * std::abs(y - yh), 1e-15);
  }
  const std::vector<double> y = {1, 2};
  const std::vector<double> yh = {1, 0, 3, 2};
  EXPECT_NEAR(quantile_loss_mean(y, yh, {0.1, 0.9}), (0.0 + 0.9 + 0.9 + 0.0) / 4.0, 1e-15);
  EXPECT_THROW(quantile_loss_mean(y, std::vector<double>{1.0}, {0.5}), UsageError);
}

TEST(Adam, MatchesClosedFormFirstStep) {
  ParamStore store;
  Param* p = store.add("p", {2});
  p->value[0] = 1.0;
  p->value[1] = -2.0;
  p->grad[0] = 0.5;
  p->grad[1] = -3.0;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step(store, cfg);
  // bias-corrected first step moves each value by lr * sign(g) (up to eps)
  EXPECT_NEAR(p->value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p->value[1], -2.0 + 0.01, 1e-9);
  EXPECT_EQ(store.step, 1u);
}

TEST(Adam, MinimizesQuadraticAndClips) {
  ParamStore store;
  Param* p = store.add("p", {3});
  p->value.fill(5.0);
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.clip_norm = 1.0;
  for (int i = 0; i < 2000; ++i) {
    store.zero_grad();
    for (std::size_t k = 0; k < 3; ++k) p->grad[k] = 2.0 * (p->value[k] - static_cast<double>(k));
    adam_step(store, cfg);
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p->value[k], static_cast<double>(k), 1e-3);
}

TEST(Adam, NonFiniteGradientDivergesWithoutUpdate) {
  ParamStore store;
  Param* p = store.add("w", {2});
  p->value.fill(1.0);
  p->grad[1] = std::nan("");
  try {
    adam_step(store, AdamConfig{});
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("'w'"), std::string::npos);
  }
  EXPECT_EQ(p->value[0], 1.0);
  EXPECT_EQ(store.step, 0u);
}

TEST(Params, BinaryRoundTripAndMismatch) {
  const std::string path = ::testing::TempDir() + "fluxtft_params.bin";
  ParamStore a;
  Rng rng(3);
  Dense::create(a, "layer", 3, 2, rng);
  a.save(path);
  ParamStore b;
  Rng rng2(99);
  Dense::create(b, "layer", 3, 2, rng2);
  EXPECT_NE(a.snapshot(), b.snapshot());
  b.load(path);
  EXPECT_EQ(a.snapshot(), b.snapshot());
  ParamStore c;
  Dense::create(c, "other", 3, 2, rng2);
  EXPECT_THROW(c.load(path), DataError);
  EXPECT_EQ(a.manifest()["values"], 8);
}
