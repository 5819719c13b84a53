// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "epic/grad_check.hpp"
#include "epic/objective.hpp"

using namespace epic;

namespace {

ClassTextBank bank_of(Tensor embeddings) {
  ClassTextBank b;
  b.embeddings = std::move(embeddings);
  b.sequences.resize(b.embeddings.rows());
  return b;
}

Var probs(std::initializer_list<double> v) { return Var::constant(Tensor::matrix({v})); }

}  // namespace

TEST(Predict, TwoClassClosedForm) {
  // cos = 1 with class 0, 0 with class 1, tau = 1: p0 = e / (e + 1).
  ClassTextBank bank = bank_of(Tensor::matrix({{2, 0}, {0, 3}}));
  Tensor p = predict(Var::constant(Tensor::matrix({{5, 0}})), bank, 1.0).value();
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1), 1e-15);
  EXPECT_NEAR(p[1], 1 / (e + 1), 1e-15);
}

TEST(Predict, TemperatureSharpens) {
  ClassTextBank bank = bank_of(Tensor::matrix({{1, 0}, {0, 1}, {1, 1}}));
  Var x = Var::constant(Tensor::matrix({{1, 0.2}}));
  Tensor soft = predict(x, bank, 1.0).value(), sharp = predict(x, bank, 0.07).value();
  EXPECT_GT(sharp[argmax(sharp)], soft[argmax(soft)]);
  EXPECT_EQ(argmax(sharp), argmax(soft));
  double s = 0;
  for (double v : sharp.values()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-14);
  EXPECT_THROW((void)predict(x, bank, 0.0), std::invalid_argument);
}

TEST(Predict, MultiLabelMarginalsAreSigmoids) {
  ClassTextBank bank = bank_of(Tensor::matrix({{1, 0}, {0, 1}}));
  Tensor p = predict_multi(Var::constant(Tensor::matrix({{1, 1}})), bank, Var::constant(Tensor(Shape{1}, 0.5)))
                 .value();
  // cos = 1/√2 each, logit √2.
  const double want = 1.0 / (1.0 + std::exp(-std::sqrt(2.0)));
  EXPECT_NEAR(p[0], want, 1e-15);
  EXPECT_NEAR(p[1], want, 1e-15);
}

TEST(Predict, ClassBankRequiresTwoClasses) {
  FrozenBackbone bb(BackboneConfig{});
  EXPECT_THROW(ClassTextBank::build(bb, {{0, 1, 2, 3, 4, 5, 6, 7}}), std::invalid_argument);
  ClassTextBank ok = ClassTextBank::build(bb, {{0, 1, 2, 3, 4, 5, 6, 7}, {7, 6, 5, 4, 3, 2, 1, 0}});
  EXPECT_EQ(ok.embeddings.shape(), (Shape{2, 32}));
}

TEST(Loss, UniformTwoClassIsLnTwo) {
  EXPECT_NEAR(loss_uni(probs({0.5, 0.5}), 0).value().item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_uni(probs({0.5, 0.5}), 0, true).value().item(), std::log(2.0), 1e-15);
}

TEST(Loss, LiteralSingleLabelEqualsDefaultForTwoClasses) {
  // For K = 2 the one-hot BCE averaged over classes is -log p_y.
  for (double p0 : {0.1, 0.37, 0.8})
    for (std::size_t y : {0u, 1u}) {
      Var p = probs({p0, 1 - p0});
      EXPECT_NEAR(loss_uni(p, y, true).value().item(), loss_uni(p, y).value().item(), 1e-14);
    }
}

TEST(Loss, LiteralSingleLabelThreeClasses) {
  // (1/3)[-log 0.5 - log(1 - 0.3) - log(1 - 0.2)]
  const double want = (-std::log(0.5) - std::log(0.7) - std::log(0.8)) / 3.0;
  EXPECT_NEAR(loss_uni(probs({0.5, 0.3, 0.2}), 0, true).value().item(), want, 1e-15);
  EXPECT_NEAR(loss_uni(probs({0.5, 0.3, 0.2}), 1).value().item(), -std::log(0.3), 1e-15);
}

TEST(Loss, MultiLabelWorkedExamples) {
  Var p = probs({0.5, 0.5});
  EXPECT_NEAR(loss_multi(p, {1, 1}).value().item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_multi(p, {1, 1}, true).value().item(), 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_multi(probs({0.9, 0.2}), {1, 0}).value().item(), -(std::log(0.9) + std::log(0.8)) / 2, 1e-15);
  EXPECT_THROW((void)loss_multi(p, {1, 2}), std::invalid_argument);
  EXPECT_THROW((void)loss_multi(p, {1}), ShapeError);
}

TEST(Loss, ClampKeepsLossFinite) {
  const double l = loss_uni(probs({1.0, 0.0}), 1).value().item();
  EXPECT_NEAR(l, -std::log(kProbClamp), 1e-9);
  EXPECT_THROW((void)loss_uni(probs({0.5, 0.5}), 2), std::out_of_range);
}

TEST(Loss, GradientsThroughHeadMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  ClassTextBank bank = bank_of(gaussian({4, 6}, 0.0, 1.0, rng));
  Parameter x("x", gaussian({1, 6}, 0.0, 1.0, rng), Role::Trainable);
  Parameter tau("tau", Tensor(Shape{1}, 0.3), Role::Trainable);
  for (bool literal : {false, true}) {
    auto uni = [&](Tape& t) { return loss_uni(predict(t.leaf(x), bank, t.leaf(tau)), 2, literal); };
    GradCheckReport r = grad_check(uni, {&x, &tau}, 1e-6, 1e-6);
    EXPECT_TRUE(r.pass) << "uni literal=" << literal << " " << r.max_rel_error;
    auto multi = [&](Tape& t) {
      return loss_multi(predict_multi(t.leaf(x), bank, t.leaf(tau)), {1, 0, 0, 1}, literal);
    };
    r = grad_check(multi, {&x, &tau}, 1e-6, 1e-6);
    EXPECT_TRUE(r.pass) << "multi literal=" << literal << " " << r.max_rel_error;
  }
}

TEST(Loss, SoftmaxCrossEntropyGradientIsPMinusOneHot) {
  Parameter z("z", Tensor::matrix({{0.3, -1.0, 2.0}}), Role::Trainable);
  Tape tape;
  Var p = softmax(tape.leaf(z), 1);
  tape.backward(loss_uni(p, 1));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(z.grad[i], p.value()[i] - (i == 1 ? 1.0 : 0.0), 1e-14);
}

TEST(Metrics, AccuracyCountsArgmaxHits) {
  std::vector<Tensor> p = {Tensor::vector({0.7, 0.3}), Tensor::vector({0.4, 0.6}), Tensor::vector({0.9, 0.1}),
                           Tensor::vector({0.2, 0.8})};
  EXPECT_DOUBLE_EQ(*accuracy_metrics(p, {0, 1, 1, 1}).accuracy, 0.75);
  EXPECT_THROW(accuracy_metrics(p, {0}), std::invalid_argument);
}

TEST(Metrics, F1MicroAndMacroWorkedExample) {
  // class 0: tp 1, fp 1, fn 0 -> 2/3; class 1: tp 1, fp 0, fn 1 -> 2/3;
  // class 2: nothing predicted or present -> 0.
  std::vector<std::vector<std::uint8_t>> pred = {{1, 1, 0}, {1, 0, 0}}, gold = {{1, 1, 0}, {0, 1, 0}};
  Metrics m = f1_metrics(pred, gold);
  EXPECT_NEAR(*m.f1_micro, 2.0 * 2 / (2.0 * 2 + 1 + 1), 1e-15);
  EXPECT_NEAR(*m.f1_macro, (2.0 / 3 + 2.0 / 3 + 0.0) / 3, 1e-15);
  EXPECT_FALSE(m.accuracy.has_value());
  EXPECT_DOUBLE_EQ(m.headline(), *m.f1_micro);
}

TEST(Metrics, PerfectPredictionsScoreOne) {
  std::vector<std::vector<std::uint8_t>> gold = {{1, 0}, {0, 1}, {1, 1}};
  Metrics m = f1_metrics(gold, gold);
  EXPECT_DOUBLE_EQ(*m.f1_micro, 1.0);
  EXPECT_DOUBLE_EQ(*m.f1_macro, 1.0);
  EXPECT_EQ(threshold(Tensor::vector({0.5, 0.49, 0.9})), (std::vector<std::uint8_t>{1, 0, 1}));
}
