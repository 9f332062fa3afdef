#pragma once

#include <stdexcept>
#include <string>

namespace rseg {

/// Tensor or label-map dimensions disagree with what an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value (network spec, loss config, noise spec, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// On-disk artifact is missing, truncated, or carries an unexpected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rseg
