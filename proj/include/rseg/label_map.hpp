#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rseg/errors.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

/// 2D grid of class indices, row-major (row = image y).
using LabelMap = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelBatch = std::vector<LabelMap>;

/// Throws ShapeError unless every map is H x W, and ConfigError if any label is >= num_classes.
inline void check_label_batch(std::span<const LabelMap> labels, Index height, Index width,
                              int num_classes) {
  for (const LabelMap& m : labels) {
    if (m.rows() != height || m.cols() != width)
      throw ShapeError("label map is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       ", expected " + std::to_string(height) + "x" + std::to_string(width));
    if (m.size() > 0 && int(m.maxCoeff()) >= num_classes)
      throw ConfigError("label " + std::to_string(int(m.maxCoeff())) + " out of range for " +
                        std::to_string(num_classes) + " classes");
  }
}

/// Per-pixel argmax over channels of an NCHW tensor; ties resolve to the lowest class index.
template <typename Scalar>
LabelBatch argmax_channels(const BasicTensor<Scalar>& scores) {
  require_rank(scores.shape(), 4, "argmax_channels");
  const Index n = scores.dim(0), k = scores.dim(1), h = scores.dim(2), w = scores.dim(3);
  LabelBatch out(std::size_t(n), LabelMap::Zero(h, w));
  for (Index b = 0; b < n; ++b)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        Index best = 0;
        Scalar best_val = scores(b, 0, y, x);
        for (Index c = 1; c < k; ++c)
          if (scores(b, c, y, x) > best_val) {
            best_val = scores(b, c, y, x);
            best = c;
          }
        out[std::size_t(b)](y, x) = std::uint8_t(best);
      }
  return out;
}

}  // namespace rseg
