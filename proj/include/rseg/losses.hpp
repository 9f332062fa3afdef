#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rseg/errors.hpp"
#include "rseg/label_map.hpp"
#include "rseg/ops.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

enum class LossKind { CE, BCE, Hybrid };

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CE: return "ce";
    case LossKind::BCE: return "bce";
    case LossKind::Hybrid: return "hybrid";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "ce" || s == "CE") return LossKind::CE;
  if (s == "bce" || s == "BCE") return LossKind::BCE;
  if (s == "hybrid" || s == "Hybrid") return LossKind::Hybrid;
  throw ConfigError("unknown loss kind '" + std::string(s) + "' (expected ce, bce or hybrid)");
}

struct LossConfig {
  LossKind kind = LossKind::CE;
  double beta = 1e-4;
  /// Probabilities are clamped to [clamp_eps, 1] before any log or pow.
  double clamp_eps = 1e-7;
  /// Hybrid: classes whose training-pixel fraction is below this use the CE term.
  double rare_class_threshold = 0.005;
  /// Hybrid: explicit rare classes; overrides the threshold when set.
  std::optional<std::vector<int>> rare_class_set;

  void validate() const {
    if (!(clamp_eps > 0.0 && clamp_eps <= 1e-3)) throw ConfigError("loss: clamp_eps must lie in (0, 1e-3]");
    if (kind != LossKind::CE && !(beta > 0.0)) throw ConfigError("loss: beta must be > 0 for bce and hybrid");
    if (!(rare_class_threshold >= 0.0 && rare_class_threshold <= 1.0))
      throw ConfigError("loss: rare_class_threshold must lie in [0, 1]");
    if (rare_class_set)
      for (int c : *rare_class_set)
        if (c < 0 || c > 255) throw ConfigError("loss: rare class index out of range");
  }
};

template <typename Scalar>
struct LossResult {
  /// Mean per-pixel loss over the batch.
  double value = 0.0;
  BasicTensor<Scalar> grad_logits;
  /// Unreduced loss, [N, 1, H, W].
  BasicTensor<Scalar> per_pixel;
};

/// Fraction of pixels carrying each class index in [0, num_classes).
inline std::vector<double> class_frequencies(std::span<const LabelMap> labels, int num_classes) {
  std::vector<double> counts(std::size_t(num_classes), 0.0);
  double total = 0.0;
  for (const LabelMap& m : labels) {
    for (Index i = 0; i < m.size(); ++i) {
      const int c = m.data()[i];
      if (c >= num_classes) throw ConfigError("class_frequencies: label out of range");
      counts[std::size_t(c)] += 1.0;
    }
    total += double(m.size());
  }
  if (total > 0.0)
    for (double& c : counts) c /= total;
  return counts;
}

namespace detail {

inline constexpr int kMaxClasses = 256;

// Per-pixel terms. `p` holds the K softmax probabilities of one pixel; the
// return value is the loss and `dz` receives d(loss)/d(logits).

inline double ce_pixel(const double* p, int k, int y, double eps, double* dz) {
  for (int j = 0; j < k; ++j) dz[j] = p[j];
  dz[y] -= 1.0;
  return -std::log(std::clamp(p[y], eps, 1.0));
}

inline double bce_pixel(const double* p, int k, int y, double beta, double eps, double* dz) {
  std::array<double, kMaxClasses> g;
  double power_sum = 0.0;
  for (int j = 0; j < k; ++j) {
    const double pc = std::clamp(p[j], eps, 1.0);
    const double log_pc = std::log(pc);
    power_sum += std::exp((beta + 1.0) * log_pc);
    // Clamped probabilities are constant in the logits.
    g[std::size_t(j)] = p[j] >= eps ? (beta + 1.0) * std::exp(beta * log_pc) : 0.0;
  }
  const double py = std::clamp(p[y], eps, 1.0);
  const double log_py = std::log(py);
  // (1 - p^beta) / beta without cancellation at small beta.
  const double value = (beta + 1.0) * (-std::expm1(beta * log_py)) / beta + power_sum;
  if (p[y] >= eps) g[std::size_t(y)] -= (beta + 1.0) * std::exp((beta - 1.0) * log_py);

  // Softmax Jacobian: dz_j = p_j (g_j - sum_k g_k p_k).
  double weighted = 0.0;
  for (int j = 0; j < k; ++j) weighted += g[std::size_t(j)] * p[j];
  for (int j = 0; j < k; ++j) dz[j] = p[j] * (g[std::size_t(j)] - weighted);
  return value;
}

// Shared driver: softmax, per-pixel term selection, mean reduction.
template <typename Scalar, typename PixelTerm>
LossResult<Scalar> reduce_pixels(const BasicTensor<Scalar>& logits, std::span<const LabelMap> labels,
                                 PixelTerm&& term) {
  require_rank(logits.shape(), 4, "loss logits");
  const Index n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3), hw = h * w;
  if (Index(labels.size()) != n)
    throw ShapeError("loss: " + std::to_string(labels.size()) + " label maps for batch of " + std::to_string(n));
  if (k < 2 || k > kMaxClasses) throw ShapeError("loss: class count out of range");
  check_label_batch(labels, h, w, int(k));

  const BasicTensor<Scalar> probs = softmax_channels(logits);
  LossResult<Scalar> result{0.0, BasicTensor<Scalar>(logits.shape()), BasicTensor<Scalar>({n, 1, h, w})};
  const double scale = 1.0 / double(n * hw);
  std::array<double, kMaxClasses> p, dz;
  double total = 0.0;
  for (Index b = 0; b < n; ++b) {
    const Scalar* pb = probs.data() + b * k * hw;
    Scalar* gb = result.grad_logits.data() + b * k * hw;
    const std::uint8_t* yb = labels[std::size_t(b)].data();
    for (Index i = 0; i < hw; ++i) {
      for (Index c = 0; c < k; ++c) p[std::size_t(c)] = double(pb[c * hw + i]);
      const double v = term(p.data(), int(k), int(yb[i]), dz.data());
      result.per_pixel[b * hw + i] = Scalar(v);
      total += v;
      for (Index c = 0; c < k; ++c) gb[c * hw + i] = Scalar(dz[std::size_t(c)] * scale);
    }
  }
  result.value = total * scale;
  return result;
}

}  // namespace detail

/// Mean softmax cross-entropy; the gradient is the standard (p - onehot(y)) / pixel_count.
template <typename Scalar>
LossResult<Scalar> ce_loss(const BasicTensor<Scalar>& logits, std::span<const LabelMap> labels,
                           double clamp_eps = 1e-7) {
  return detail::reduce_pixels(logits, labels, [&](const double* p, int k, int y, double* dz) {
    return detail::ce_pixel(p, k, y, clamp_eps, dz);
  });
}

/**
 * Mean beta-cross-entropy over all pixels:
 *
 *   L = (beta + 1) / beta * (1 - p(y|x)^beta) + sum_k p(k|x)^(beta + 1)
 *
 * with p the channel softmax of the logits. Tends to CE + 1 as beta -> 0.
 */
template <typename Scalar>
LossResult<Scalar> bce_loss(const BasicTensor<Scalar>& logits, std::span<const LabelMap> labels, double beta,
                            double clamp_eps = 1e-7) {
  if (!(beta > 0.0)) throw ConfigError("bce_loss: beta must be > 0 (use ce_loss for the beta -> 0 limit)");
  return detail::reduce_pixels(logits, labels, [&](const double* p, int k, int y, double* dz) {
    return detail::bce_pixel(p, k, y, beta, clamp_eps, dz);
  });
}

/// Per-class flags: true where the hybrid loss applies the CE term.
inline std::vector<bool> rare_classes(const LossConfig& config, std::span<const double> class_frequencies) {
  std::vector<bool> rare(class_frequencies.size(), false);
  if (config.rare_class_set) {
    for (int c : *config.rare_class_set)
      if (std::size_t(c) < rare.size()) rare[std::size_t(c)] = true;
  } else {
    for (std::size_t c = 0; c < rare.size(); ++c) rare[c] = class_frequencies[c] < config.rare_class_threshold;
  }
  return rare;
}

/// CE on pixels whose true class is rare, BCE on all others.
template <typename Scalar>
LossResult<Scalar> hybrid_loss(const BasicTensor<Scalar>& logits, std::span<const LabelMap> labels,
                               const LossConfig& config, std::span<const double> class_frequencies) {
  config.validate();
  if (!(config.beta > 0.0)) throw ConfigError("hybrid_loss: beta must be > 0");
  require_rank(logits.shape(), 4, "hybrid_loss logits");
  if (Index(class_frequencies.size()) != logits.dim(1))
    throw ShapeError("hybrid_loss: class_frequencies has " + std::to_string(class_frequencies.size()) +
                     " entries for " + std::to_string(logits.dim(1)) + " classes");
  double sum = 0.0;
  for (double f : class_frequencies) sum += f;
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("hybrid_loss: class_frequencies must sum to 1");
  const std::vector<bool> rare = rare_classes(config, class_frequencies);
  return detail::reduce_pixels(logits, labels, [&](const double* p, int k, int y, double* dz) {
    return rare[std::size_t(y)] ? detail::ce_pixel(p, k, y, config.clamp_eps, dz)
                                : detail::bce_pixel(p, k, y, config.beta, config.clamp_eps, dz);
  });
}

/// Dispatches on config.kind.
template <typename Scalar>
LossResult<Scalar> compute_loss(const LossConfig& config, const BasicTensor<Scalar>& logits,
                                std::span<const LabelMap> labels, std::span<const double> class_frequencies = {}) {
  config.validate();
  switch (config.kind) {
    case LossKind::CE: return ce_loss(logits, labels, config.clamp_eps);
    case LossKind::BCE: return bce_loss(logits, labels, config.beta, config.clamp_eps);
    case LossKind::Hybrid: return hybrid_loss(logits, labels, config, class_frequencies);
  }
  throw ConfigError("unknown loss kind");
}

}  // namespace rseg
