#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rseg/label_map.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

/// The nine head tissue classes, in label-index order.
enum class Tissue : std::uint8_t {
  Background = 0,
  WM = 1,
  GM = 2,
  CSF = 3,
  Bone = 4,
  Skin = 5,
  Cavities = 6,
  Eyes = 7,
  Ventricles = 8,
};

inline constexpr int kNumClasses = 9;

/// Lower-case identifiers, also used as CSV column names.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "background", "wm", "gm", "csf", "bone", "skin", "cavities", "eyes", "ventricles"};

/// Human-readable column titles for the text report.
inline constexpr std::array<std::string_view, kNumClasses> kClassTitles = {
    "background", "WM", "GM", "CSF", "bones", "skin", "cavities", "eyes", "ventricles"};

/**
 * Geometry and intensity model of the synthetic head.
 *
 * Coordinates are normalised so the image spans [-1, 1] on both axes with
 * negative v pointing anterior. The head is a stack of nested ellipses
 * (skin, bone, CSF, GM, WM) inset from the outer skin boundary, with
 * ventricles inside WM, a cavity embedded in the anterior bone and two
 * small eyes in the anterior skin layer.
 */
struct PhantomSpec {
  Index height = 64;
  Index width = 64;

  double center_jitter = 0.03;
  double axis_jitter = 0.05;
  double rotation_jitter = 0.1;

  /// Mean image intensity per class; CSF and bone deliberately overlap.
  std::array<double, kNumClasses> class_means = {0.0, 0.80, 0.55, 0.25, 0.18, 0.65, 0.05, 0.45, 0.25};
  double noise_sigma = 0.06;

  std::uint64_t seed = 0;

  void validate() const;
};

struct Phantom {
  Tensor image;  ///< [1, H, W]
  LabelMap labels;
};

/// Deterministic in (spec, index).
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t index);

/// Bhattacharyya coefficient of two normal distributions; 0 means disjoint, 1 identical.
double bhattacharyya_coefficient(double mean_a, double sigma_a, double mean_b, double sigma_b);

struct SwapPair {
  int class_a;
  int class_b;
  double rate;
};

/**
 * Boundary-banded class-swap label noise.
 *
 * A pixel of class a with a class-b pixel inside its (2*band_width + 1)^2
 * window flips to b with probability `rate`, and symmetrically for b.
 */
struct NoiseSpec {
  std::vector<SwapPair> swap_pairs;
  int band_width = 2;
  std::uint64_t seed = 0;

  void validate() const;

  /// "default": CSF<->bone and cavities<->bone at rate 0.3, band 2. "none": no pairs.
  static NoiseSpec preset(std::string_view name, std::uint64_t seed = 0);
};

/// Flip decisions read the input map only, so each pixel flips at most once.
LabelMap corrupt_labels(const LabelMap& labels, const NoiseSpec& noise);

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view to_string(Split split);
Split parse_split(std::string_view s);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Floor-based split sizes {train, val, test}; the remainder goes to train.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions);

struct Dataset {
  Index height = 0;
  Index width = 0;
  int class_count = kNumClasses;
  std::vector<Tensor> images;  ///< each [1, H, W]
  LabelBatch clean_labels;
  LabelBatch noisy_labels;
  std::vector<Split> splits;

  std::size_t size() const { return images.size(); }
  std::vector<std::size_t> indices(Split split) const;
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset build_dataset(std::size_t n, const PhantomSpec& spec, const NoiseSpec& noise,
                      const SplitFractions& fractions = {}, std::uint64_t seed = 0);

// Directory layout: manifest.txt (key=value: format_version, count, height,
// width, class_count), images.f32, labels_clean.u8, labels_noisy.u8 and
// splits.u8 (one byte per sample: 0 train, 1 val, 2 test). Payloads are
// sample-major and little-endian.
inline constexpr int kDatasetFormatVersion = 1;

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Stacks the selected samples into an [N, 1, H, W] batch.
Tensor stack_images(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace rseg
