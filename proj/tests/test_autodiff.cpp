#include <gtest/gtest.h>

#include <cmath>

#include "dpmts/dpmts.hpp"

using namespace dpmts;

namespace {

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 0.0) {
  ASSERT_EQ(t.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "index " << i;
}

Tensor weighted(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(matmul(reshape(y, {1, y.size()}), Tensor::uniform({y.size(), 1}, 1.0, rng)));
}

}  // namespace

TEST(Matmul, IdentityAndHandArithmetic) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(matmul(a, Tensor::matrix({{1, 0}, {0, 1}})), {1, 2, 3, 4});
  expect_values(matmul(a, Tensor::matrix({{5, 6}, {7, 8}})), {19, 22, 43, 50});
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  Tensor a = Tensor::uniform({3, 4}, 1.0, rng), b = Tensor::uniform({4, 2}, 1.0, rng);
  const auto r = check_gradients([&] { return sum(matmul(a, b)); }, {a, b});
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(Softmax, UniformRowAndSingleColumn) {
  expect_values(softmax_rows(Tensor::matrix({{0, 0, 0, 0}})), {0.25, 0.25, 0.25, 0.25}, 1e-15);
  expect_values(softmax_rows(Tensor::matrix({{3}, {-2}, {7}})), {1, 1, 1});
}

TEST(Softmax, MatchesLongDoubleOracle) {
  const Tensor s = softmax_rows(Tensor::matrix({{1, 2, 3}}));
  long double z = 0;
  for (int k = 1; k <= 3; ++k) z += std::exp(static_cast<long double>(k));
  for (int k = 1; k <= 3; ++k)
    EXPECT_NEAR(s[k - 1], static_cast<double>(std::exp(static_cast<long double>(k)) / z), 1e-12);
}

TEST(Softmax, RowsSumToOneAndStayInUnitInterval) {
  Rng rng(11);
  const Tensor s = softmax_rows(Tensor::uniform({6, 9}, 30.0, rng));
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 9; ++c) {
      const double v = s.at(r, c);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, CausalRowsIgnoreLaterColumns) {
  const Tensor s = causal_softmax_rows(Tensor::matrix({{1, 9, 9}, {0, 0, 9}, {0, 0, 0}}));
  expect_values(s, {1, 0, 0, 0.5, 0.5, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
}

TEST(LayerNorm, ConstantRowAndAffineCollapse) {
  const Tensor ones = Tensor::filled({4}, 1.0), zeros = Tensor::zeros({4});
  expect_values(layer_norm(Tensor::matrix({{5, 5, 5, 5}}), ones, zeros), {0, 0, 0, 0});
  const Tensor b = Tensor::vector({1, -2, 3, 0.5});
  expect_values(layer_norm(Tensor::matrix({{1, 7, -3, 2}}), zeros, b), {1, -2, 3, 0.5});
}

TEST(LayerNorm, StandardizesRows) {
  Rng rng(5);
  const Tensor y = layer_norm(Tensor::uniform({4, 8}, 10.0, rng), Tensor::filled({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.at(r, c) / 8;
    for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 8;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Tensor a = Tensor::uniform({2, 6}, 2.0, rng), g = Tensor::uniform({6}, 1.0, rng), b = Tensor::uniform({6}, 1.0, rng);
  Rng wr(8);
  const Tensor w = Tensor::uniform({12, 1}, 1.0, wr);
  const auto r = check_gradients([&] { return sum(matmul(reshape(layer_norm(a, g, b), {1, 12}), w)); }, {a, g, b});
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(Relu, DefinitionAndSaturation) {
  expect_values(relu(Tensor::vector({-1, 0, 2})), {0, 0, 2});
  expect_values(relu(Tensor::vector({-3, -0.5, -1e-9})), {0, 0, 0});
}

TEST(Relu, GradientAwayFromKink) {
  Rng rng(9);
  Tensor x = Tensor::uniform({5, 4}, 1.0, rng);
  for (double& v : x.mutable_data())
    if (std::abs(v) < 1e-3) v += 0.01;
  const auto r = check_gradients([&] { return weighted(relu(x), 10); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(Linear, IdentityBiasAndGradient) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  expect_values(linear(x, Tensor::matrix({{1, 0}, {0, 1}}), Tensor::zeros({2})), {1, 2, 3, 4, 5, 6});
  expect_values(linear(Tensor::zeros({3, 2}), Tensor::matrix({{1, 2}, {3, 4}}), Tensor::vector({7, -1})),
                {7, -1, 7, -1, 7, -1});
  EXPECT_THROW(linear(x, Tensor::zeros({3, 2}), Tensor::zeros({2})), DimensionError);

  Rng rng(12);
  Tensor in = Tensor::uniform({5, 3}, 1.0, rng), w = Tensor::uniform({3, 2}, 1.0, rng), b = Tensor::uniform({2}, 1.0, rng);
  const auto r = check_gradients([&] { return weighted(linear(in, w, b), 13); }, {in, w, b});
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(MseLoss, ValuesErrorsAndAnalyticGradient) {
  EXPECT_EQ(mse_loss(Tensor::vector({1, 2, 3}), Tensor::vector({1, 2, 3})).item(), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(Tensor::vector({0, 0}), Tensor::vector({1, 3})).item(), 5.0);
  EXPECT_THROW(mse_loss(Tensor::vector({0, 0}), Tensor::vector({1})), DimensionError);

  Rng rng(14);
  Tensor p = Tensor::uniform({9}, 3.0, rng);
  const Tensor t = Tensor::uniform({9}, 3.0, rng);
  p.set_requires_grad(true);
  backward(mse_loss(p, t));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(p.grad()[i], 2.0 * (p[i] - t[i]) / 9.0, 1e-10);
}

TEST(Backward, SumGivesOnesAndUnreachableStaysAbsent) {
  Tensor x = Tensor::zeros({2, 3}, true);
  Tensor unused = Tensor::zeros({4}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, NonScalarLossIsContractViolation) {
  EXPECT_THROW(backward(Tensor::zeros({2}, true)), ContractViolation);
}

TEST(Backward, GradientsAccumulateUntilZeroGrad) {
  Tensor x = Tensor::vector({1, 2}, true);
  backward(sum(x));
  backward(sum(scale(x, 3.0)));
  EXPECT_EQ(x.grad()[0], 4.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, MultiUseTensorGetsSummedGradient) {
  Tensor x = Tensor::vector({3}, true);
  backward(sum(add(x, scale(x, 2.0))));
  EXPECT_EQ(x.grad()[0], 3.0);
}

TEST(Backward, TapeIsClearedAfterBackward) {
  Tensor x = Tensor::vector({1, 2}, true);
  const Tensor y = sum(scale(x, 2.0));
  EXPECT_FALSE(tape_order(y).empty());
  backward(y);
  EXPECT_TRUE(y.node()->inputs.empty());
}

TEST(Backward, TapeOrderVisitsConsumersFirst) {
  Tensor x = Tensor::vector({1, 2}, true);
  const Tensor a = scale(x, 2.0);
  const Tensor b = add(a, x);
  const Tensor loss = sum(add(a, b));
  const auto order = tape_order(loss);
  const auto pos = [&](const Tensor& t) {
    return std::find(order.begin(), order.end(), t.node().get()) - order.begin();
  };
  EXPECT_LT(pos(loss), pos(b));
  EXPECT_LT(pos(b), pos(a));
  EXPECT_LT(pos(a), pos(x));
}

TEST(Backward, CompositeMatchesFiniteDifferences) {
  Rng rng(15);
  Tensor x = Tensor::uniform({4, 3}, 1.0, rng), w = Tensor::uniform({3, 5}, 1.0, rng), b = Tensor::uniform({5}, 1.0, rng);
  const Tensor y = Tensor::uniform({20}, 1.0, rng);
  const auto r = check_gradients([&] { return mse_loss(reshape(relu(linear(x, w, b)), {20}), y); }, {x, w, b});
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(NoGrad, GuardStopsRecording) {
  Tensor x = Tensor::vector({1}, true);
  Tensor y;
  {
    NoGradGuard ng;
    y = scale(x, 2.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Parameter p("p", Tensor::vector({1.5, -2}), true);
  backward(sum(scale(p.tensor, 0.0)));
  Adam adam;
  adam.step({&p});
  EXPECT_EQ(p.tensor[0], 1.5);
  EXPECT_EQ(p.tensor[1], -2.0);
}

TEST(Adam, FrozenParameterUnchangedEvenWithGradient) {
  Parameter p("frozen", Tensor::vector({0.25}), false);
  p.tensor.set_requires_grad(true);
  backward(sum(p.tensor));
  ASSERT_TRUE(p.tensor.has_grad());
  p.tensor.set_requires_grad(false);
  Adam adam;
  for (int i = 0; i < 10; ++i) adam.step({&p});
  EXPECT_EQ(p.tensor[0], 0.25);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("w", Tensor::vector({0.0}), true);
  backward(sum(p.tensor));  // g = 1
  Adam adam(AdamOptions{1e-3});
  adam.step({&p});
  EXPECT_NEAR(p.tensor[0], -1e-3, 1e-10);
}

TEST(Adam, MissingGradientIsContractViolation) {
  Parameter p("w", Tensor::vector({0.0}), true);
  Adam adam;
  EXPECT_THROW(adam.step({&p}), ContractViolation);
}

TEST(Adam, MomentsPersistAcrossSteps) {
  Parameter p("w", Tensor::vector({0.0}), true);
  Adam adam;
  backward(sum(p.tensor));
  adam.step({&p});
  zero_grad({&p});
  backward(sum(scale(p.tensor, 0.0)));
  adam.step({&p});
  // Step 2 with zero gradient still moves because the first moment remembers g = 1.
  EXPECT_LT(p.tensor[0], -1e-3);
}

TEST(GradCheck, DetectsAWrongBackwardRule) {
  // y = x², but the backward rule claims dy/dx = x.
  const auto broken_square = [](const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
    return detail::make_result(x.shape(), std::move(out), {x.node()}, [](detail::Node& self) {
      auto& in = *self.inputs[0];
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * in.data[i];
    });
  };
  Tensor x = Tensor::vector({0.7, -1.3, 2.0});
  const auto r = check_gradients([&] { return sum(broken_square(x)); }, {x});
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(GradCheck, SuiteAllPass) {
  for (const auto& e : run_gradcheck_suite()) EXPECT_TRUE(e.passed()) << e.name << ": " << e.max_rel_error << " " << e.worst;
}

TEST(Determinism, ForwardIsBitIdentical) {
  const auto run = [] {
    Rng rng(21);
    const Tensor x = Tensor::uniform({4, 6}, 1.0, rng);
    return layer_norm(gelu(x), Tensor::filled({6}, 1.0), Tensor::zeros({6})).to_vector();
  };
  EXPECT_EQ(run(), run());
}
