#include <gtest/gtest.h>

#include <set>

#include "rseg/metrics.hpp"
#include "rseg/phantom.hpp"
#include "test_util.hpp"

namespace rseg {
namespace {

using test::random_labels;

LabelMap map2x2(std::initializer_list<int> values) {
  LabelMap m(2, 2);
  Index i = 0;
  for (int v : values) m.data()[i++] = std::uint8_t(v);
  return m;
}

// Dice from explicit sets of (sample, pixel) coordinates.
double brute_force_dice(const LabelBatch& pred, const LabelBatch& truth, int c) {
  std::set<std::pair<std::size_t, Index>> p, t;
  for (std::size_t b = 0; b < pred.size(); ++b)
    for (Index i = 0; i < pred[b].size(); ++i) {
      if (pred[b].data()[i] == c) p.insert({b, i});
      if (truth[b].data()[i] == c) t.insert({b, i});
    }
  if (p.empty() && t.empty()) return 1.0;
  std::size_t both = 0;
  for (const auto& e : p) both += t.count(e);
  return 2.0 * double(both) / double(p.size() + t.size());
}

TEST(Dice, IdenticalMapsScoreOne) {
  const LabelBatch y = random_labels(3, 5, 5, 4, 1);
  const DiceReport r = dice_per_class(y, y, 4);
  for (double d : r.per_class) EXPECT_EQ(d, 1.0);
  EXPECT_EQ(r.mean_dice, 1.0);
  EXPECT_EQ(r.n_samples, 3u);
}

TEST(Dice, DisjointMapsScoreZero) {
  const LabelBatch pred{LabelMap::Constant(3, 3, 0)}, truth{LabelMap::Constant(3, 3, 1)};
  const DiceReport r = dice_per_class(pred, truth, 3);
  EXPECT_EQ(r.per_class[0], 0.0);
  EXPECT_EQ(r.per_class[1], 0.0);
  EXPECT_EQ(r.per_class[2], 1.0);
  // Only class 1 occurs in the truth.
  EXPECT_EQ(r.mean_dice, 0.0);
}

TEST(Dice, HandCountedTwoByTwo) {
  const DiceReport r = dice_per_class(LabelBatch{map2x2({0, 1, 1, 1})}, LabelBatch{map2x2({0, 0, 1, 1})}, 2);
  EXPECT_DOUBLE_EQ(r.per_class[1], 0.8);
  EXPECT_DOUBLE_EQ(r.per_class[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mean_dice, (0.8 + 2.0 / 3.0) / 2.0);
}

TEST(Dice, PooledOverTheBatch) {
  // Per-sample Dice would be 0 and 1; pooling weighs both samples' pixels together.
  const LabelBatch pred{map2x2({1, 0, 0, 0}), map2x2({1, 1, 1, 1})};
  const LabelBatch truth{map2x2({0, 1, 0, 0}), map2x2({1, 1, 1, 1})};
  EXPECT_DOUBLE_EQ(dice_per_class(pred, truth, 2).per_class[1], 2.0 * 4 / (5 + 5));
}

TEST(Dice, AgreesWithBruteForceSets) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const int k = 2 + int(seed % 5);
    const LabelBatch pred = random_labels(2, 4, 5, k, seed), truth = random_labels(2, 4, 5, k, seed + 1000);
    const DiceReport r = dice_per_class(pred, truth, k);
    for (int c = 0; c < k; ++c) EXPECT_NEAR(r.per_class[std::size_t(c)], brute_force_dice(pred, truth, c), 1e-12);
  }
}

TEST(Dice, SymmetricAndPermutationEquivariant) {
  const LabelBatch a = random_labels(2, 6, 6, 5, 3), b = random_labels(2, 6, 6, 5, 4);
  const DiceReport ab = dice_per_class(a, b, 5), ba = dice_per_class(b, a, 5);
  EXPECT_EQ(ab.per_class, ba.per_class);

  const std::uint8_t perm[5] = {3, 0, 4, 1, 2};
  auto permute = [&](LabelBatch m) {
    for (LabelMap& x : m) x = x.unaryExpr([&](std::uint8_t v) { return perm[v]; });
    return m;
  };
  const DiceReport permuted = dice_per_class(permute(a), permute(b), 5);
  for (int c = 0; c < 5; ++c) EXPECT_EQ(permuted.per_class[perm[c]], ab.per_class[std::size_t(c)]);
}

TEST(Dice, RejectsMismatchedInputs) {
  EXPECT_THROW(dice_per_class(random_labels(2, 3, 3, 3, 1), random_labels(1, 3, 3, 3, 2), 3), ShapeError);
  EXPECT_THROW(dice_per_class(random_labels(1, 3, 3, 3, 1), random_labels(1, 3, 4, 3, 2), 3), ShapeError);
  EXPECT_THROW(dice_per_class(random_labels(1, 3, 3, 5, 1), random_labels(1, 3, 3, 3, 2), 3), ConfigError);
}

TEST(Confusion, DiagonalForIdenticalMapsAndConservesPixels) {
  const LabelBatch y = random_labels(2, 7, 3, 4, 5);
  const ConfusionMatrix m = confusion_matrix(y, y, 4);
  EXPECT_EQ(m.sum(), 2 * 7 * 3);
  EXPECT_EQ(m, ConfusionMatrix(m.diagonal().asDiagonal()));

  const LabelBatch other = random_labels(2, 7, 3, 4, 6);
  const ConfusionMatrix n = confusion_matrix(other, y, 4);
  EXPECT_EQ(n.sum(), 2 * 7 * 3);
  for (int c = 0; c < 4; ++c) {
    std::int64_t truth_count = 0;
    for (const LabelMap& t : y) truth_count += (t.array() == c).count();
    EXPECT_EQ(n.row(c).sum(), truth_count);
  }
}

TEST(Confusion, DiceIdentityIsExact) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const LabelBatch pred = random_labels(2, 5, 5, 6, seed), truth = random_labels(2, 5, 5, 6, seed + 77);
    EXPECT_EQ(dice_from_confusion(confusion_matrix(pred, truth, 6)), dice_per_class(pred, truth, 6).per_class);
  }
}

DiceReport report(std::string tag, std::vector<double> scores) {
  DiceReport r;
  r.model_tag = std::move(tag);
  r.per_class = std::move(scores);
  double sum = 0.0;
  for (double s : r.per_class) sum += s;
  r.mean_dice = sum / double(r.per_class.size());
  return r;
}

TEST(Table, PerfectRowRendersOnes) {
  const std::vector<DiceReport> rows{report("perfect", std::vector<double>(kNumClasses, 1.0))};
  const std::string table = render_comparison_table(rows);
  std::size_t ones = 0;
  for (std::size_t pos = table.find("1.00"); pos != std::string::npos; pos = table.find("1.00", pos + 1)) ++ones;
  EXPECT_EQ(ones, std::size_t(kNumClasses) + 1);  // every class plus the mean
  EXPECT_NE(table.find("perfect"), std::string::npos);
}

TEST(Table, ColumnsFollowClassOrder) {
  const std::vector<DiceReport> rows{report("m", std::vector<double>(kNumClasses, 0.5))};
  const std::string table = render_comparison_table(rows);
  std::size_t last = 0;
  for (std::string_view title : kClassTitles) {
    const std::size_t pos = table.find(title, last);
    ASSERT_NE(pos, std::string::npos) << title;
    last = pos;
  }
  const std::string csv = comparison_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,background,wm,gm,csf,bone,skin,cavities,eyes,ventricles,mean");
}

TEST(Table, CsvRoundTripsExactly) {
  const std::vector<DiceReport> rows{report("a", {0.1, 0.2, 1.0 / 3.0, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}),
                                     report("b", {1, 0, 0.25, 0.75, 0.123456789012345, 1, 1, 0, 0.5})};
  const std::vector<DiceReport> back = parse_comparison_csv(comparison_csv(rows));
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].model_tag, rows[i].model_tag);
    EXPECT_EQ(back[i].per_class, rows[i].per_class);
    EXPECT_EQ(back[i].mean_dice, rows[i].mean_dice);
  }
}

TEST(Table, EmptyReportListRejected) {
  EXPECT_THROW(render_comparison_table({}), ConfigError);
  EXPECT_THROW(comparison_csv({}), ConfigError);
}

TEST(Table, AveragingIsElementwise) {
  const std::vector<DiceReport> rows{report("x", {0.2, 0.4}), report("x", {0.6, 1.0})};
  const DiceReport mean = average_reports(rows, "x");
  EXPECT_DOUBLE_EQ(mean.per_class[0], 0.4);
  EXPECT_DOUBLE_EQ(mean.per_class[1], 0.7);
  EXPECT_DOUBLE_EQ(mean.mean_dice, 0.55);
  EXPECT_EQ(class_column_name(3, 4), "class3");
  EXPECT_EQ(class_column_name(3, kNumClasses), "csf");
}

}  // namespace
}  // namespace rseg
