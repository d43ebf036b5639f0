#include <gtest/gtest.h>

#include "ldyn/autograd.hpp"
#include "test_support.hpp"

namespace ldyn {
namespace {

using testing::check_gradients;
using testing::random_tensor;

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor<float>(Shape{0, 2}), DimensionError);
  Tensor<double> t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Var<double> eye(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}));
  Var<double> m(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(matmul(eye, m).value().values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, RowTimesColumn) {
  Var<double> a(Tensor<double>::matrix(1, 2, {1, 2}));
  Var<double> b(Tensor<double>::matrix(2, 1, {3, 4}));
  const auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(c.item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Var<double> a(Tensor<double>(Shape{2, 3}));
  Var<double> b(Tensor<double>(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Var<double> a(random_tensor({3, 3}, rng), true);
  Var<double> b(random_tensor({3, 3}, rng), true);
  const auto check = check_gradients({a, b}, [&] { return sum(matmul(a, b)); });
  EXPECT_LE(check.max_rel_error, 1e-6);
  EXPECT_EQ(check.checked, 18u);
}

TEST(Backward, SumGivesOnes) {
  Var<double> x(Tensor<double>(Shape{3}, std::vector<double>{0.5, -2, 7}), true);
  backward(sum(x));
  EXPECT_EQ(x.grad().values(), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SumOfSquares) {
  Var<double> x(Tensor<double>(Shape{2}, std::vector<double>{1, 2}), true);
  backward(sum(square(x)));
  EXPECT_EQ(x.grad().values(), (std::vector<double>{2, 4}));
}

TEST(Backward, DisconnectedParameterGetsZero) {
  Var<double> x(Tensor<double>(Shape{2}, 1.0), true);
  Var<double> p(Tensor<double>(Shape{2}, 3.0), true);
  backward(sum(x));
  EXPECT_EQ(p.grad().values(), (std::vector<double>{0, 0}));
}

TEST(Backward, RepeatedCallsAccumulate) {
  Var<double> x(Tensor<double>(Shape{2}, std::vector<double>{1, 2}), true);
  const auto loss = sum(square(x));
  backward(loss);
  backward(loss);
  EXPECT_EQ(x.grad().values(), (std::vector<double>{4, 8}));
  x.zero_grad();
  backward(loss);
  EXPECT_EQ(x.grad().values(), (std::vector<double>{2, 4}));
}

TEST(Backward, NonScalarIsContractError) {
  Var<double> x(Tensor<double>(Shape{2}, 1.0), true);
  EXPECT_THROW(backward(square(x)), ContractError);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  Var<double> x(Tensor<double>(Shape{2}, 1.0), true);
  NoGradGuard guard;
  EXPECT_FALSE(square(x).requires_grad());
}

// Every differentiable op on random small shapes.
TEST(Autograd, ElementwiseAndStructuralOpsMatchFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.index(6);
    const std::size_t n = 2 + rng.index(6);
    Var<double> a(random_tensor({m, n}, rng), true);
    Var<double> b(random_tensor({m, n}, rng), true);
    Var<double> w(random_tensor({n + 1, n}, rng), true);
    Var<double> bias(random_tensor({n + 1}, rng), true);
    Var<double> row(random_tensor({n}, rng), true);
    Var<double> pos(random_tensor({m, n}, rng, 0.5, 2.0), true);

    auto fn = [&] {
      auto lin = linear(a, w, bias);
      auto t1 = sum(tanh(slice_cols(lin, 0, n)));
      auto t2 = mean(sigmoid(mul(a, b)));
      auto t3 = sum(leaky_relu(sub(add_row(a, row), b), 0.01));
      auto t4 = sum(reciprocal(sqrt(add_scalar(pos, 0.1))));
      auto t5 = sum(square(center_columns(concat_cols<double>({a, b}))));
      auto t6 = sum(mul(transpose(concat_rows<double>({a, slice_rows(b, 0, 1)})),
                        transpose(concat_rows<double>({b, slice_rows(a, 0, 1)}))));
      auto t7 = sum(sum_rows(scale(reshape(a, {n, m}), 0.3)));
      return add(add(add(t1, t2), add(t3, t4)), add(add(t5, t6), t7));
    };
    const auto check = check_gradients({a, b, w, bias, row, pos}, fn);
    EXPECT_LE(check.max_rel_error, 1e-4) << "trial " << trial;
  }
}

}  // namespace
}  // namespace ldyn
