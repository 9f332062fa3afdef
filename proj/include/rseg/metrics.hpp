#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rseg/label_map.hpp"

namespace rseg {

struct DiceReport {
  std::string model_tag;
  /// Dice per class index; pooled over every pixel of the batch.
  std::vector<double> per_class;
  /// Mean over the classes that occur in the reference labels.
  double mean_dice = 0.0;
  std::size_t n_samples = 0;

  friend bool operator==(const DiceReport&, const DiceReport&) = default;
};

/// (i, j) counts pixels with truth i predicted as j.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

ConfusionMatrix confusion_matrix(std::span<const LabelMap> pred, std::span<const LabelMap> truth, int num_classes);

/**
 * Per-class Dice 2|P∩T| / (|P| + |T|), with intersections and set sizes summed
 * over the whole batch before dividing. A class absent from both prediction
 * and truth scores 1; absent from exactly one, 0.
 */
DiceReport dice_per_class(std::span<const LabelMap> pred, std::span<const LabelMap> truth, int num_classes,
                          std::string model_tag = {});

/// Dice per class from a confusion matrix: 2 M_cc / (row_c + col_c).
std::vector<double> dice_from_confusion(const ConfusionMatrix& matrix);

/// Element-wise mean of reports that share a class count.
DiceReport average_reports(std::span<const DiceReport> reports, std::string model_tag);

/// CSV column name for class c (the fixed head-class names when there are nine classes).
std::string class_column_name(int c, int num_classes);

/// Fixed-width text table, one row per report, two decimals.
std::string render_comparison_table(std::span<const DiceReport> reports);

/// CSV with header `model,<class columns>,mean` and full float precision.
std::string comparison_csv(std::span<const DiceReport> reports);

/// Inverse of comparison_csv (n_samples is not stored and reads back as 0).
std::vector<DiceReport> parse_comparison_csv(std::string_view csv);

}  // namespace rseg
