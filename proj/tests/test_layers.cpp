#include <gtest/gtest.h>

#include <cmath>

#include "ldyn/layers.hpp"
#include "test_support.hpp"

namespace ldyn {
namespace {

using testing::check_gradients;
using testing::random_tensor;

double leaky(double v) { return v > 0 ? v : kLeakySlope * v; }
double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

TEST(Mlp, ZeroParametersGiveZeroOutput) {
  auto mlp = Mlp<double>::zeros({4, {8, 5}, 3});
  Rng rng(1);
  const auto out = mlp.forward(random_tensor({6, 4}, rng));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, IdentityLinearLayer) {
  MlpSpec spec{3, {}, 3};
  std::vector<DenseLayer<double>> layers{
      {Var<double>(Tensor<double>::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}), true),
       Var<double>(Tensor<double>(Shape{3}), true)}};
  Mlp<double> mlp(spec, std::move(layers));
  const Tensor<double> x = Tensor<double>::matrix(2, 3, {1, -2, 3, 0.5, 0.25, -4});
  EXPECT_EQ(mlp.forward(x), x);
}

// Scalar re-evaluation of a seed-0, two-layer network at x = e_0.
TEST(Mlp, MatchesHandEvaluatedForwardPass) {
  MlpSpec spec{4, {5}, 2};
  Mlp<double> mlp(spec, 0);
  const auto& w1 = mlp.layers()[0].weight.value();
  const auto& b1 = mlp.layers()[0].bias.value();
  const auto& w2 = mlp.layers()[1].weight.value();
  const auto& b2 = mlp.layers()[1].bias.value();
  const std::vector<double> x{1, 0, 0, 0};
  std::vector<double> hidden(5);
  for (std::size_t j = 0; j < 5; ++j) {
    double acc = b1[j];
    for (std::size_t i = 0; i < 4; ++i) acc += w1.at(j, i) * x[i];
    hidden[j] = leaky(acc);
  }
  const auto out = mlp.forward(Tensor<double>::matrix(1, 4, x));
  for (std::size_t k = 0; k < 2; ++k) {
    double acc = b2[k];
    for (std::size_t j = 0; j < 5; ++j) acc += w2.at(k, j) * hidden[j];
    EXPECT_NEAR(out[k], acc, 1e-14);
  }
}

TEST(Mlp, InitialisationIsSeededAndFanInBounded) {
  MlpSpec spec{16, {32}, 4};
  Mlp<float> a(spec, 3);
  Mlp<float> b(spec, 3);
  Mlp<float> c(spec, 4);
  EXPECT_EQ(a.layers()[0].weight.value(), b.layers()[0].weight.value());
  EXPECT_NE(a.layers()[0].weight.value(), c.layers()[0].weight.value());
  for (float v : a.layers()[0].weight.value().data()) EXPECT_LE(std::abs(v), 0.25f);
}

TEST(Mlp, NonFiniteActivationNamesLayer) {
  auto mlp = Mlp<double>::zeros({2, {3}, 1});
  mlp.layers()[1].weight.mutable_value()[0] = std::numeric_limits<double>::infinity();
  auto x = Tensor<double>::matrix(1, 2, {1, 1});
  mlp.layers()[0].bias.mutable_value().fill(1.0);
  try {
    mlp.forward(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(Mlp, WrongInputWidthIsDimensionError) {
  Mlp<float> mlp({3, {4}, 2}, 0);
  EXPECT_THROW(mlp.forward(Tensor<float>(Shape{1, 4})), DimensionError);
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 1 + rng.index(6);
    const std::size_t hid = 1 + rng.index(7);
    const std::size_t out = 1 + rng.index(4);
    const auto act = trial % 2 == 0 ? Activation::LeakyRelu : Activation::Tanh;
    Mlp<double> mlp({in, {hid, 1 + rng.index(7)}, out, act}, static_cast<std::uint64_t>(trial));
    Var<double> x(random_tensor({1 + rng.index(5), in}, rng));
    const auto check = check_gradients(mlp.parameters(), [&] { return sum(mlp.forward(x)); });
    EXPECT_LE(check.max_rel_error, 1e-4) << "trial " << trial;
  }
}

TEST(Lstm, ZeroWeightsOutputHeadBias) {
  auto lstm = Lstm<double>::zeros({3, 4, 2, 2, 5});
  auto head_bias = lstm.parameters().back();
  head_bias.mutable_value()[0] = 0.3;
  head_bias.mutable_value()[1] = -0.2;
  Rng rng(2);
  std::vector<Tensor<double>> trace;
  NoGradGuard guard;
  const auto out = lstm.forward(Var<double>(random_tensor({2, 5, 3}, rng, -5, 5)), &trace).value();
  EXPECT_EQ(out.values(), (std::vector<double>{0.3, -0.2, 0.3, -0.2}));
  for (const auto& h : trace)
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

// One cell, one hidden unit, scalar input: two steps of the cell equations.
TEST(Lstm, MatchesHandRolledCellEquations) {
  LstmSpec spec{1, 1, 1, 1, 2};
  // gate order: input, forget, cell, output
  const std::vector<double> wi{0.5, -0.3, 0.8, 0.1};
  const std::vector<double> wh{0.2, 0.4, -0.6, 0.7};
  const std::vector<double> b{0.1, 0.2, -0.1, 0.05};
  std::vector<LstmLayer<double>> layers{{Var<double>(Tensor<double>::matrix(4, 1, wi), true),
                                         Var<double>(Tensor<double>::matrix(4, 1, wh), true),
                                         Var<double>(Tensor<double>(Shape{4}, b), true)}};
  DenseLayer<double> head{Var<double>(Tensor<double>::matrix(1, 1, {1.5}), true),
                          Var<double>(Tensor<double>(Shape{1}, std::vector<double>{-0.25}), true)};
  Lstm<double> lstm(spec, std::move(layers), std::move(head));

  const std::vector<double> xs{0.7, -1.2};
  double h = 0, c = 0;
  for (double x : xs) {
    const double i = sigm(wi[0] * x + wh[0] * h + b[0]);
    const double f = sigm(wi[1] * x + wh[1] * h + b[1]);
    const double g = std::tanh(wi[2] * x + wh[2] * h + b[2]);
    const double o = sigm(wi[3] * x + wh[3] * h + b[3]);
    c = f * c + i * g;
    h = o * std::tanh(c);
  }
  std::vector<Tensor<double>> trace;
  NoGradGuard guard;
  const auto out = lstm.forward(Var<double>(Tensor<double>(Shape{1, 2, 1}, xs)), &trace).value();
  EXPECT_NEAR(trace.back()[0], h, 1e-15);
  EXPECT_NEAR(out[0], 1.5 * h - 0.25, 1e-15);
}

TEST(Lstm, SequenceLengthMismatchIsDimensionError) {
  Lstm<float> lstm({3, 4, 1, 2, 10}, 0);
  EXPECT_THROW(lstm.forward(Tensor<float>(Shape{1, 9, 3})), DimensionError);
}

TEST(Lstm, GradientsMatchFiniteDifferences) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    LstmSpec spec{1 + rng.index(3), 1 + rng.index(4), 1 + rng.index(2), 1 + rng.index(3), 1 + rng.index(4)};
    Lstm<double> lstm(spec, static_cast<std::uint64_t>(100 + trial));
    Var<double> seq(random_tensor({1 + rng.index(3), spec.timesteps, spec.input_dim}, rng));
    const auto check = check_gradients(lstm.parameters(), [&] { return sum(lstm.forward(seq)); });
    EXPECT_LE(check.max_rel_error, 1e-4) << "trial " << trial;
  }
}

TEST(Lstm, HiddenStateStaysInsideOpenUnitInterval) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    Lstm<double> lstm({2, 6, 2, 1, 8}, static_cast<std::uint64_t>(trial));
    std::vector<Tensor<double>> trace;
    NoGradGuard guard;
    lstm.forward(Var<double>(random_tensor({3, 8, 2}, rng, -10, 10)), &trace);
    for (const auto& h : trace)
      for (double v : h.data()) {
        EXPECT_GT(v, -1.0);
        EXPECT_LT(v, 1.0);
      }
  }
}

TEST(Layers, ForwardIsDeterministic) {
  Mlp<float> mlp({5, {7, 3}, 2}, 9);
  Lstm<float> lstm({2, 5, 2, 3, 4}, 9);
  Rng rng(5);
  const auto x = random_tensor({4, 5}, rng).cast<float>();
  const auto seq = random_tensor({2, 4, 2}, rng).cast<float>();
  EXPECT_EQ(mlp.forward(x), mlp.forward(x));
  EXPECT_EQ(lstm.forward(seq), lstm.forward(seq));
}

}  // namespace
}  // namespace ldyn
