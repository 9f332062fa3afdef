#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rseg/losses.hpp"
#include "test_util.hpp"

namespace rseg {
namespace {

using test::numeric_gradient;
using test::random_labels;
using test::random_tensor;
using test::relative_error;

// Straightforward per-pixel formulas in long double, written without the
// cancellation-avoiding rewrites used by the library.
long double softmax_at(const TensorD& z, Index b, Index c, Index y, Index x) {
  long double m = z(b, 0, y, x);
  for (Index k = 1; k < z.dim(1); ++k) m = std::max<long double>(m, z(b, k, y, x));
  long double s = 0;
  for (Index k = 0; k < z.dim(1); ++k) s += std::exp((long double)z(b, k, y, x) - m);
  return std::exp((long double)z(b, c, y, x) - m) / s;
}

double reference_loss(const TensorD& z, const LabelBatch& labels, double beta, bool ce) {
  long double total = 0;
  const Index n = z.dim(0), k = z.dim(1), h = z.dim(2), w = z.dim(3);
  for (Index b = 0; b < n; ++b)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const int t = labels[std::size_t(b)](y, x);
        const long double pt = softmax_at(z, b, t, y, x);
        if (ce) {
          total += -std::log(pt);
          continue;
        }
        long double sum = 0;
        for (Index c = 0; c < k; ++c) sum += std::pow(softmax_at(z, b, c, y, x), (long double)beta + 1);
        total += ((beta + 1) / beta) * (1 - std::pow(pt, (long double)beta)) + sum;
      }
  return double(total / (long double)(n * h * w));
}

TensorD one_pixel(std::initializer_list<double> logits) {
  return TensorD({1, Index(logits.size()), 1, 1}, logits);
}

LabelBatch one_label(int y) { return {LabelMap::Constant(1, 1, std::uint8_t(y))}; }

TEST(CrossEntropy, PerfectPredictionIsZero) {
  EXPECT_NEAR(ce_loss(one_pixel({50, 0, 0}), one_label(0)).value, 0.0, 1e-12);
}

TEST(CrossEntropy, UniformPredictionIsLogK) {
  EXPECT_NEAR(ce_loss(one_pixel({0, 0, 0, 0}), one_label(2)).value, std::log(4.0), 1e-12);
}

TEST(CrossEntropy, MatchesReference) {
  const TensorD z = random_tensor<double>({2, 5, 3, 4}, 1, -3, 3);
  const LabelBatch y = random_labels(2, 3, 4, 5, 2);
  EXPECT_NEAR(ce_loss(z, y).value, reference_loss(z, y, 0, true), 1e-12);
}

TEST(RobustLoss, OneHotPredictionGivesOne) {
  // Only the clamped off-target terms (eps^(1+beta) each) separate the value from 1.
  EXPECT_NEAR(bce_loss(one_pixel({200, 0, 0}), one_label(0), 1e-4).value, 1.0, 1e-6);
  EXPECT_NEAR(bce_loss(one_pixel({200, 0, 0}), one_label(0), 0.5).value, 1.0, 1e-6);
}

TEST(RobustLoss, TwoClassUniformBetaOne) {
  // 2 * (1 - 0.5) + 0.25 + 0.25
  EXPECT_NEAR(bce_loss(one_pixel({0, 0}), one_label(1), 1.0).value, 1.5, 1e-12);
}

TEST(RobustLoss, MatchesReference) {
  const TensorD z = random_tensor<double>({2, 4, 3, 3}, 3, -3, 3);
  const LabelBatch y = random_labels(2, 3, 3, 4, 4);
  for (double beta : {1e-4, 0.1, 0.5, 1.0, 2.0}) EXPECT_NEAR(bce_loss(z, y, beta).value, reference_loss(z, y, beta, false), 1e-9) << beta;
}

TEST(RobustLoss, ApproachesCrossEntropyPlusOneAsBetaVanishes) {
  const TensorD z = random_tensor<double>({1, 6, 4, 4}, 5, -2, 2);
  const LabelBatch y = random_labels(1, 4, 4, 6, 6);
  const double ce = ce_loss(z, y).value;
  double previous_gap = 1e9;
  for (double beta : {1e-2, 1e-3, 1e-4, 1e-6}) {
    const double gap = std::abs(bce_loss(z, y, beta).value - 1.0 - ce);
    EXPECT_LT(gap, previous_gap);
    previous_gap = gap;
  }
  EXPECT_LT(previous_gap, 1e-4);
}

TEST(RobustLoss, DownWeightsConfidentlyWrongPixels) {
  // Relative to CE, the gradient on a pixel whose label the model strongly disputes
  // shrinks by roughly p_y^beta, while an agreeing pixel keeps most of its weight.
  const double beta = 0.5;
  auto ratio = [&](const TensorD& z) {
    return bce_loss(z, one_label(0), beta).grad_logits.vec().norm() / ce_loss(z, one_label(0)).grad_logits.vec().norm();
  };
  const double disputed = ratio(one_pixel({-4, 4, 0}));
  const double agreed = ratio(one_pixel({1, 0, 0}));
  EXPECT_LT(disputed, 0.5 * agreed);
}

class LossGradient : public ::testing::TestWithParam<double> {};

TEST_P(LossGradient, RobustLossMatchesFiniteDifferences) {
  const double beta = GetParam();
  const TensorD z = random_tensor<double>({2, 4, 3, 3}, 7, -2, 2);
  const LabelBatch y = random_labels(2, 3, 3, 4, 8);
  const TensorD numeric = numeric_gradient([&](const TensorD& v) { return bce_loss(v, y, beta).value; }, z, 1e-5);
  EXPECT_LT(relative_error(bce_loss(z, y, beta).grad_logits.vec(), numeric.vec()), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Betas, LossGradient, ::testing::Values(1e-4, 0.1, 0.5));

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  const TensorD z = random_tensor<double>({2, 4, 3, 3}, 9, -2, 2);
  const LabelBatch y = random_labels(2, 3, 3, 4, 10);
  const TensorD numeric = numeric_gradient([&](const TensorD& v) { return ce_loss(v, y).value; }, z, 1e-5);
  EXPECT_LT(relative_error(ce_loss(z, y).grad_logits.vec(), numeric.vec()), 1e-4);
}

TEST(CrossEntropy, FloatGradientTracksDouble) {
  const TensorD z = random_tensor<double>({1, 9, 4, 4}, 11, -3, 3);
  const LabelBatch y = random_labels(1, 4, 4, 9, 12);
  const auto d = bce_loss(z, y, 1e-4);
  const auto f = bce_loss(Tensor(z.cast<float>()), y, 1e-4);
  EXPECT_NEAR(f.value, d.value, 1e-5);
  EXPECT_LT(relative_error(f.grad_logits.vec().cast<double>(), d.grad_logits.vec()), 1e-4);
}

std::vector<double> frequencies_of(const LabelBatch& y, int k) { return class_frequencies(y, k); }

TEST(Hybrid, ComposesPerPixel) {
  const TensorD z = random_tensor<double>({2, 4, 4, 4}, 13, -2, 2);
  const LabelBatch y = random_labels(2, 4, 4, 4, 14);
  LossConfig cfg;
  cfg.kind = LossKind::Hybrid;
  cfg.beta = 0.3;
  cfg.rare_class_set = std::vector<int>{1, 3};
  const auto freq = frequencies_of(y, 4);
  const auto h = hybrid_loss(z, y, cfg, freq);
  const auto ce = ce_loss(z, y), bce = bce_loss(z, y, 0.3);
  double mean = 0.0;
  for (Index b = 0; b < 2; ++b)
    for (Index i = 0; i < 16; ++i) {
      const int label = y[std::size_t(b)].data()[i];
      const double expected = (label == 1 || label == 3) ? ce.per_pixel[b * 16 + i] : bce.per_pixel[b * 16 + i];
      EXPECT_EQ(h.per_pixel[b * 16 + i], expected);
      mean += expected / 32.0;
    }
  EXPECT_NEAR(h.value, mean, 1e-12);
}

TEST(Hybrid, DegenerateThresholdsReduceToEndpoints) {
  const TensorD z = random_tensor<double>({1, 3, 4, 4}, 15, -2, 2);
  const LabelBatch y = random_labels(1, 4, 4, 3, 16);
  const auto freq = frequencies_of(y, 3);
  LossConfig cfg;
  cfg.kind = LossKind::Hybrid;
  cfg.beta = 0.2;
  cfg.rare_class_threshold = 0.0;
  EXPECT_EQ(hybrid_loss(z, y, cfg, freq).value, bce_loss(z, y, 0.2).value);
  cfg.rare_class_threshold = 1.0;
  EXPECT_EQ(hybrid_loss(z, y, cfg, freq).value, ce_loss(z, y).value);
  cfg.rare_class_threshold = 0.0;
  cfg.rare_class_set = std::vector<int>{0, 1, 2};
  EXPECT_EQ(hybrid_loss(z, y, cfg, freq).value, ce_loss(z, y).value);
}

TEST(Hybrid, ThresholdSelectsRareClasses) {
  LossConfig cfg;
  const std::vector<double> freq{0.9, 0.097, 0.003};
  EXPECT_EQ(rare_classes(cfg, freq), (std::vector<bool>{false, false, true}));
  cfg.rare_class_set = std::vector<int>{1};
  EXPECT_EQ(rare_classes(cfg, freq), (std::vector<bool>{false, true, false}));
}

TEST(Hybrid, GradientMatchesFiniteDifferences) {
  const TensorD z = random_tensor<double>({2, 4, 3, 3}, 17, -2, 2);
  const LabelBatch y = random_labels(2, 3, 3, 4, 18);
  LossConfig cfg;
  cfg.kind = LossKind::Hybrid;
  cfg.beta = 0.1;
  cfg.rare_class_set = std::vector<int>{2};
  const auto freq = frequencies_of(y, 4);
  const TensorD numeric =
      numeric_gradient([&](const TensorD& v) { return hybrid_loss(v, y, cfg, freq).value; }, z, 1e-5);
  EXPECT_LT(relative_error(hybrid_loss(z, y, cfg, freq).grad_logits.vec(), numeric.vec()), 1e-4);
}

TEST(Losses, InvariantToBatchOrder) {
  const TensorD z = random_tensor<double>({2, 3, 4, 4}, 19, -2, 2);
  const LabelBatch y = random_labels(2, 4, 4, 3, 20);
  TensorD swapped(z.shape());
  const Index half = z.size() / 2;
  swapped.vec() << z.vec().tail(half), z.vec().head(half);
  const LabelBatch y_swapped{y[1], y[0]};
  EXPECT_NEAR(bce_loss(z, y, 0.1).value, bce_loss(swapped, y_swapped, 0.1).value, 1e-14);
  EXPECT_NEAR(ce_loss(z, y).value, ce_loss(swapped, y_swapped).value, 1e-14);
}

TEST(Losses, ClassFrequenciesSumToOne) {
  const auto f = class_frequencies(random_labels(3, 8, 8, 9, 21), 9);
  EXPECT_NEAR(std::accumulate(f.begin(), f.end(), 0.0), 1.0, 1e-12);
}

TEST(Losses, InvalidInputsAreRejected) {
  const TensorD z = random_tensor<double>({1, 3, 2, 2}, 22);
  const LabelBatch y = random_labels(1, 2, 2, 3, 23);
  EXPECT_THROW(bce_loss(z, y, 0.0), ConfigError);
  EXPECT_THROW(bce_loss(z, y, -1.0), ConfigError);
  EXPECT_THROW(ce_loss(z, LabelBatch{}), ShapeError);
  EXPECT_THROW(ce_loss(z, random_labels(1, 3, 2, 3, 24)), ShapeError);
  EXPECT_THROW(ce_loss(z, LabelBatch{LabelMap::Constant(2, 2, 3)}), ConfigError);
  LossConfig cfg;
  cfg.kind = LossKind::Hybrid;
  EXPECT_THROW(hybrid_loss(z, y, cfg, std::vector<double>{0.5, 0.5}), ShapeError);
  EXPECT_THROW(hybrid_loss(z, y, cfg, std::vector<double>{0.5, 0.5, 0.5}), ConfigError);
  cfg.clamp_eps = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_loss_kind("focal"), ConfigError);
  EXPECT_EQ(parse_loss_kind("hybrid"), LossKind::Hybrid);
}

}  // namespace
}  // namespace rseg
