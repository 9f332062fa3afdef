#include "rseg/metrics.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "rseg/errors.hpp"
#include "rseg/phantom.hpp"

namespace rseg {

namespace {

void check_pair(std::span<const LabelMap> pred, std::span<const LabelMap> truth, int num_classes) {
  if (num_classes < 1) throw ConfigError("metrics: num_classes must be positive");
  if (pred.size() != truth.size())
    throw ShapeError("metrics: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) +
                     " references");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != truth[i].rows() || pred[i].cols() != truth[i].cols())
      throw ShapeError("metrics: sample " + std::to_string(i) + " prediction and reference differ in shape");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_label_batch(pred.subspan(i, 1), truth[i].rows(), truth[i].cols(), num_classes);
    check_label_batch(truth.subspan(i, 1), truth[i].rows(), truth[i].cols(), num_classes);
  }
}

double dice_ratio(double intersection, double size_sum) {
  if (size_sum == 0.0) return 1.0;
  return 2.0 * intersection / size_sum;
}

std::string format_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const LabelMap> pred, std::span<const LabelMap> truth, int num_classes) {
  check_pair(pred, truth, num_classes);
  ConfusionMatrix m = ConfusionMatrix::Zero(num_classes, num_classes);
  for (std::size_t s = 0; s < pred.size(); ++s)
    for (Index i = 0; i < truth[s].size(); ++i) ++m(truth[s].data()[i], pred[s].data()[i]);
  return m;
}

DiceReport dice_per_class(std::span<const LabelMap> pred, std::span<const LabelMap> truth, int num_classes,
                          std::string model_tag) {
  check_pair(pred, truth, num_classes);
  std::vector<std::int64_t> inter(std::size_t(num_classes), 0), pred_count(inter), truth_count(inter);
  for (std::size_t s = 0; s < pred.size(); ++s)
    for (Index i = 0; i < truth[s].size(); ++i) {
      const std::uint8_t p = pred[s].data()[i], t = truth[s].data()[i];
      ++pred_count[p];
      ++truth_count[t];
      if (p == t) ++inter[p];
    }
  DiceReport report{std::move(model_tag), std::vector<double>(std::size_t(num_classes)), 0.0, pred.size()};
  double present_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < std::size_t(num_classes); ++c) {
    report.per_class[c] = dice_ratio(double(inter[c]), double(pred_count[c] + truth_count[c]));
    if (truth_count[c] > 0) {
      present_sum += report.per_class[c];
      ++present;
    }
  }
  report.mean_dice = present > 0 ? present_sum / present : 1.0;
  return report;
}

std::vector<double> dice_from_confusion(const ConfusionMatrix& matrix) {
  std::vector<double> out(std::size_t(matrix.rows()));
  const Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> rows = matrix.rowwise().sum();
  const Eigen::Matrix<std::int64_t, 1, Eigen::Dynamic> cols = matrix.colwise().sum();
  for (Index c = 0; c < matrix.rows(); ++c)
    out[std::size_t(c)] = dice_ratio(double(matrix(c, c)), double(rows(c) + cols(c)));
  return out;
}

DiceReport average_reports(std::span<const DiceReport> reports, std::string model_tag) {
  if (reports.empty()) throw ConfigError("average_reports: no reports");
  DiceReport avg{std::move(model_tag), std::vector<double>(reports[0].per_class.size(), 0.0), 0.0, 0};
  for (const DiceReport& r : reports) {
    if (r.per_class.size() != avg.per_class.size()) throw ShapeError("average_reports: class counts differ");
    for (std::size_t c = 0; c < avg.per_class.size(); ++c) avg.per_class[c] += r.per_class[c];
    avg.mean_dice += r.mean_dice;
    avg.n_samples += r.n_samples;
  }
  const double n = double(reports.size());
  for (double& v : avg.per_class) v /= n;
  avg.mean_dice /= n;
  return avg;
}

std::string class_column_name(int c, int num_classes) {
  if (num_classes == kNumClasses) return std::string(kClassNames[std::size_t(c)]);
  return "class" + std::to_string(c);
}

namespace {

int common_class_count(std::span<const DiceReport> reports) {
  if (reports.empty()) throw ConfigError("comparison table: no reports to render");
  const std::size_t k = reports[0].per_class.size();
  for (const DiceReport& r : reports)
    if (r.per_class.size() != k) throw ShapeError("comparison table: reports disagree on class count");
  return int(k);
}

}  // namespace

std::string render_comparison_table(std::span<const DiceReport> reports) {
  const int k = common_class_count(reports);
  std::vector<std::string> header{"Model"};
  for (int c = 0; c < k; ++c)
    header.push_back(k == kNumClasses ? std::string(kClassTitles[std::size_t(c)]) : class_column_name(c, k));
  header.push_back("mean");

  std::vector<std::vector<std::string>> rows;
  for (const DiceReport& r : reports) {
    std::vector<std::string> row{r.model_tag};
    char buf[32];
    for (double v : r.per_class) {
      std::snprintf(buf, sizeof(buf), "%.2f", v);
      row.push_back(buf);
    }
    std::snprintf(buf, sizeof(buf), "%.2f", r.mean_dice);
    row.push_back(buf);
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    widths[i] = header[i].size();
    for (const auto& row : rows) widths[i] = std::max(widths[i], row[i].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      os << (i ? " | " : "") << cells[i];
      if (i + 1 < cells.size()) os << std::string(widths[i] - cells[i].size(), ' ');
    }
    os << '\n';
  };
  emit(header);
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "-+-" : "") << std::string(widths[i], '-');
  os << '\n';
  for (const auto& row : rows) emit(row);
  return os.str();
}

std::string comparison_csv(std::span<const DiceReport> reports) {
  const int k = common_class_count(reports);
  std::ostringstream os;
  os << "model";
  for (int c = 0; c < k; ++c) os << ',' << class_column_name(c, k);
  os << ",mean\n";
  for (const DiceReport& r : reports) {
    if (r.model_tag.find_first_of(",\n") != std::string::npos)
      throw ConfigError("comparison csv: model tag '" + r.model_tag + "' contains a separator");
    os << r.model_tag;
    for (double v : r.per_class) os << ',' << format_full(v);
    os << ',' << format_full(r.mean_dice) << '\n';
  }
  return os.str();
}

std::vector<DiceReport> parse_comparison_csv(std::string_view csv) {
  auto split = [](std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return cells;
  };
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < csv.size();) {
    auto nl = csv.find('\n', start);
    if (nl == std::string_view::npos) nl = csv.size();
    if (nl > start) lines.push_back(csv.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) throw FormatError("comparison csv: empty input");
  const auto header = split(lines[0]);
  if (header.size() < 3 || header.front() != "model" || header.back() != "mean")
    throw FormatError("comparison csv: unexpected header");
  const int k = int(header.size()) - 2;
  for (int c = 0; c < k; ++c)
    if (header[std::size_t(c) + 1] != class_column_name(c, k)) throw FormatError("comparison csv: unexpected column");

  std::vector<DiceReport> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i]);
    if (cells.size() != header.size()) throw FormatError("comparison csv: row has wrong number of cells");
    DiceReport r{std::string(cells[0]), std::vector<double>(std::size_t(k)), 0.0, 0};
    auto parse = [](std::string_view s) {
      double v = 0.0;
      auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || end != s.data() + s.size()) throw FormatError("comparison csv: bad number '" + std::string(s) + "'");
      return v;
    };
    for (int c = 0; c < k; ++c) r.per_class[std::size_t(c)] = parse(cells[std::size_t(c) + 1]);
    r.mean_dice = parse(cells.back());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rseg
