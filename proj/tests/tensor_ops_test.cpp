#include <gtest/gtest.h>

#include <cmath>

#include "rseg/ops.hpp"
#include "test_util.hpp"

namespace rseg {
namespace {

using test::numeric_gradient;
using test::random_tensor;
using test::relative_error;

TEST(Conv2dForward, IdentityKernelReproducesInput) {
  const Tensor x = random_tensor({2, 1, 5, 4}, 1);
  const Tensor out = conv2d_forward(x, Tensor({1, 1, 1, 1}, {1.0f}), Tensor({1}), 1, 0);
  EXPECT_EQ(out, x);
}

TEST(Conv2dForward, ZeroKernelGivesBias) {
  const Tensor x = random_tensor({1, 3, 6, 6}, 2);
  const Tensor out = conv2d_forward(x, Tensor({2, 3, 3, 3}), Tensor({2}, {0.5f, -2.0f}), 1, 1);
  ASSERT_EQ(out.shape(), (Shape{1, 2, 6, 6}));
  EXPECT_TRUE((out.plane(0, 0).array() == 0.5f).all());
  EXPECT_TRUE((out.plane(0, 1).array() == -2.0f).all());
}

TEST(Conv2dForward, HandDotProduct) {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor k({1, 1, 2, 2}, {1, 0, 0, 1});
  const Tensor out = conv2d_forward(x, k, Tensor({1}));
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(out[0], 5.0f);
}

TEST(Conv2dForward, OutputSizeFollowsStrideAndPadding) {
  const Tensor x = random_tensor({1, 2, 7, 9}, 3);
  const Tensor out = conv2d_forward(x, random_tensor({4, 2, 3, 2}, 4), Tensor({4}), 2, 1);
  EXPECT_EQ(out.shape(), (Shape{1, 4, (7 + 2 - 3) / 2 + 1, (9 + 2 - 2) / 2 + 1}));
}

TEST(Conv2dForward, RejectsChannelMismatch) {
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1})), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 2, 3, 3}), Tensor({2})), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1})), ShapeError);
}

TEST(Conv2dForward, GemmPathMatchesDirectLoops) {
  struct Case {
    Shape in, kernel;
    Index stride, padding;
  };
  const Case cases[] = {{{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1},
                        {{1, 5, 9, 7}, {2, 5, 3, 3}, 2, 0},
                        {{1, 2, 6, 6}, {3, 2, 1, 1}, 1, 0},
                        {{3, 1, 5, 5}, {2, 1, 2, 3}, 1, 2}};
  std::uint64_t seed = 10;
  for (const Case& c : cases) {
    const Tensor x = random_tensor(c.in, seed++), k = random_tensor(c.kernel, seed++),
                 b = random_tensor({c.kernel[0]}, seed++);
    const Tensor fast = conv2d_forward(x, k, b, c.stride, c.padding);
    const Tensor slow = conv2d_forward_direct(x, k, b, c.stride, c.padding);
    ASSERT_EQ(fast.shape(), slow.shape());
    EXPECT_LT((fast.vec() - slow.vec()).cwiseAbs().maxCoeff(), 1e-6f);
  }
}

TEST(Conv2dForward, LinearInInputAndKernel) {
  const Tensor x = random_tensor({1, 2, 6, 6}, 20), k = random_tensor({3, 2, 3, 3}, 21);
  const Tensor zero_bias({3});
  const Tensor base = conv2d_forward(x, k, zero_bias, 1, 1);
  const Tensor scaled_x(x.shape(), 2.5f * x.vec());
  const Tensor scaled_k(k.shape(), -0.75f * k.vec());
  EXPECT_TRUE(conv2d_forward(scaled_x, k, zero_bias, 1, 1).vec().isApprox(2.5f * base.vec(), 1e-5f));
  EXPECT_TRUE(conv2d_forward(x, scaled_k, zero_bias, 1, 1).vec().isApprox(-0.75f * base.vec(), 1e-5f));
}

TEST(Conv2dBackward, ZeroUpstreamGivesZeroGradients) {
  const Tensor x = random_tensor({2, 2, 5, 5}, 30), k = random_tensor({3, 2, 3, 3}, 31);
  const auto g = conv2d_backward(x, k, Tensor({2, 3, 5, 5}), 1, 1);
  EXPECT_TRUE(g.grad_input.vec().isZero(0));
  EXPECT_TRUE(g.grad_kernel.vec().isZero(0));
  EXPECT_TRUE(g.grad_bias.vec().isZero(0));
}

TEST(Conv2dBackward, IdentityKernelPassesGradientThrough) {
  const Tensor x = random_tensor({1, 1, 4, 4}, 32), up = random_tensor({1, 1, 4, 4}, 33);
  const auto g = conv2d_backward(x, Tensor({1, 1, 1, 1}, {1.0f}), up);
  EXPECT_EQ(g.grad_input, up);
}

TEST(Conv2dBackward, RejectsMismatchedUpstream) {
  EXPECT_THROW(conv2d_backward(Tensor({1, 1, 4, 4}), Tensor({1, 1, 3, 3}), Tensor({1, 1, 4, 4})), ShapeError);
}

// The oracle differentiates the double-precision direct-loop convolution.
TEST(Conv2dBackward, MatchesFiniteDifferences) {
  for (auto [stride, padding] : {std::pair<Index, Index>{1, 0}, {1, 1}, {2, 1}}) {
    const Tensor x = random_tensor({1, 2, 4, 4}, 40), k = random_tensor({2, 2, 3, 3}, 41), b = random_tensor({2}, 42);
    const Tensor y = conv2d_forward(x, k, b, stride, padding);
    const Tensor w = random_tensor(y.shape(), 43);
    const auto g = conv2d_backward(x, k, w, stride, padding);

    const TensorD xd = x.cast<double>(), kd = k.cast<double>(), bd = b.cast<double>(), wd = w.cast<double>();
    auto objective = [&](const TensorD& xi, const TensorD& ki, const TensorD& bi) {
      return conv2d_forward_direct(xi, ki, bi, stride, padding).vec().dot(wd.vec());
    };
    const TensorD num_x = numeric_gradient([&](const TensorD& v) { return objective(v, kd, bd); }, xd);
    const TensorD num_k = numeric_gradient([&](const TensorD& v) { return objective(xd, v, bd); }, kd);
    const TensorD num_b = numeric_gradient([&](const TensorD& v) { return objective(xd, kd, v); }, bd);
    EXPECT_LT(relative_error(g.grad_input.vec().cast<double>(), num_x.vec()), 1e-4);
    EXPECT_LT(relative_error(g.grad_kernel.vec().cast<double>(), num_k.vec()), 1e-4);
    EXPECT_LT(relative_error(g.grad_bias.vec().cast<double>(), num_b.vec()), 1e-4);
  }
}

TEST(Softmax, UniformLogitsGiveOneOverK) {
  const Tensor p = softmax_channels(Tensor::Constant({2, 5, 3, 3}, 1.7f));
  EXPECT_TRUE(p.vec().isApproxToConstant(0.2f, 1e-6f));
}

TEST(Softmax, TwoClassClosedForm) {
  const Tensor p = softmax_channels(Tensor({1, 2, 1, 1}, {0.0f, float(std::log(2.0))}));
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-7);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-7);
}

TEST(Softmax, ShiftInvariantAndNormalised) {
  const Tensor z = random_tensor({2, 9, 4, 5}, 50, -20.0, 20.0);
  Tensor shifted = z;
  for (Index b = 0; b < 2; ++b)
    for (Index y = 0; y < 4; ++y)
      for (Index x = 0; x < 5; ++x)
        for (Index c = 0; c < 9; ++c) shifted(b, c, y, x) += float(3 * y - 7 * x + b);
  const Tensor p = softmax_channels(z), q = softmax_channels(shifted);
  EXPECT_LT((p.vec() - q.vec()).cwiseAbs().maxCoeff(), 1e-5f);
  for (Index b = 0; b < 2; ++b)
    for (Index y = 0; y < 4; ++y)
      for (Index x = 0; x < 5; ++x) {
        double sum = 0.0;
        for (Index c = 0; c < 9; ++c) sum += p(b, c, y, x);
        EXPECT_NEAR(sum, 1.0, 1e-6);
      }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor p = softmax_channels(Tensor({1, 3, 1, 1}, {1e30f, -1e30f, 0.0f}));
  EXPECT_TRUE(p.all_finite());
  EXPECT_FLOAT_EQ(p[0], 1.0f);
}

TEST(Relu, ForwardAndSubgradientAtZero) {
  const Tensor x({3}, {-1.0f, 0.0f, 2.0f});
  EXPECT_EQ(relu_forward(x), Tensor({3}, {0.0f, 0.0f, 2.0f}));
  EXPECT_EQ(relu_backward(x, Tensor({3}, {5.0f, 5.0f, 5.0f})), Tensor({3}, {0.0f, 0.0f, 5.0f}));
}

TEST(Relu, BackwardMatchesFiniteDifferencesAwayFromZero) {
  Tensor x = random_tensor({1, 2, 4, 4}, 60);
  for (Index i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) < 0.05f) x[i] = 0.1f;
  const Tensor w = random_tensor(x.shape(), 61);
  const Tensor analytic = relu_backward(x, w);
  const TensorD numeric = numeric_gradient(
      [&](const TensorD& v) { return relu_forward(v).vec().dot(w.cast<double>().vec()); }, x.cast<double>());
  EXPECT_LT(relative_error(analytic.vec().cast<double>(), numeric.vec()), 1e-4);
}

TEST(Resample, MaxPoolPicksWindowMaximum) {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = downsample2x(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 4.0f);
}

TEST(Resample, ConstantsArePreserved) {
  const Tensor c = Tensor::Constant({2, 3, 4, 6}, 0.25f);
  EXPECT_TRUE(downsample2x(c).vec().isConstant(0.25f, 0));
  EXPECT_TRUE(upsample2x(c).vec().isConstant(0.25f, 0));
  EXPECT_EQ(upsample2x(c).shape(), (Shape{2, 3, 8, 12}));
}

TEST(Resample, OddDimensionsRejected) {
  EXPECT_THROW(downsample2x(Tensor({1, 1, 3, 4})), ShapeError);
  EXPECT_THROW(downsample2x(Tensor({1, 1, 4, 5})), ShapeError);
}

TEST(Resample, UpThenDownIsIdentity) {
  for (std::uint64_t seed = 70; seed < 75; ++seed) {
    const Tensor x = random_tensor({2, 3, 3, 5}, seed);
    EXPECT_EQ(downsample2x(upsample2x(x)), x);
  }
}

TEST(Resample, BackwardPassesAreAdjoints) {
  for (std::uint64_t seed = 80; seed < 85; ++seed) {
    const Tensor x = random_tensor({2, 2, 3, 4}, seed), y = random_tensor({2, 2, 6, 8}, seed + 100);
    // <up(x), y> == <x, up^T(y)>
    EXPECT_NEAR(upsample2x(x).vec().dot(y.vec()), x.vec().dot(upsample2x_backward(y).vec()), 1e-4);
    // Max-pool is piecewise linear: <grad, x> reproduces <pool(x), g> on its active set.
    const Tensor g = random_tensor({2, 2, 3, 4}, seed + 200);
    EXPECT_NEAR(downsample2x(y).vec().dot(g.vec()), y.vec().dot(downsample2x_backward(y, g).vec()), 1e-4);
  }
}

TEST(Resample, MaxPoolBackwardMatchesFiniteDifferences) {
  const Tensor x = random_tensor({1, 2, 4, 6}, 90);
  const Tensor w = random_tensor({1, 2, 2, 3}, 91);
  const Tensor analytic = downsample2x_backward(x, w);
  const TensorD numeric = numeric_gradient(
      [&](const TensorD& v) { return downsample2x(v).vec().dot(w.cast<double>().vec()); }, x.cast<double>());
  EXPECT_LT(relative_error(analytic.vec().cast<double>(), numeric.vec()), 1e-4);
}

TEST(Concat, SplitInvertsConcat) {
  const Tensor a = random_tensor({2, 3, 4, 4}, 95), b = random_tensor({2, 5, 4, 4}, 96);
  const Tensor ab = concat_channels(a, b);
  ASSERT_EQ(ab.shape(), (Shape{2, 8, 4, 4}));
  EXPECT_EQ(ab(1, 4, 2, 3), b(1, 1, 2, 3));
  auto [a2, b2] = split_channels(ab, 3);
  EXPECT_EQ(a2, a);
  EXPECT_EQ(b2, b);
}

TEST(Determinism, RepeatedCallsAreBitIdentical) {
  const Tensor x = random_tensor({2, 3, 8, 8}, 97), k = random_tensor({4, 3, 3, 3}, 98), b = random_tensor({4}, 99);
  EXPECT_EQ(conv2d_forward(x, k, b, 1, 1), conv2d_forward(x, k, b, 1, 1));
  const Tensor up = random_tensor({2, 4, 8, 8}, 100);
  const auto g1 = conv2d_backward(x, k, up, 1, 1), g2 = conv2d_backward(x, k, up, 1, 1);
  EXPECT_EQ(g1.grad_input, g2.grad_input);
  EXPECT_EQ(g1.grad_kernel, g2.grad_kernel);
  EXPECT_EQ(softmax_channels(x), softmax_channels(x));
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeError);
  EXPECT_EQ(Tensor({2, 3, 4}).size(), 24);
}

}  // namespace
}  // namespace rseg
