#include "rseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rseg/random.hpp"

namespace rseg {

namespace {

// Outer skin semi-axes and the inset of each inner boundary, normalised units.
constexpr double kSkinAxisU = 0.80;
constexpr double kSkinAxisV = 0.90;
constexpr double kBoneInset = 0.10;
constexpr double kCsfInset = 0.20;
constexpr double kGmInset = 0.28;
constexpr double kWmInset = 0.40;

constexpr double kCavityHalfU = 0.16;
constexpr double kCavityHalfV = 0.045;
constexpr double kEyeRadius = 0.04;
constexpr double kEyeAngle = 0.45;  // radians from the anterior midline

struct Ellipse {
  double cu, cv, au, av, angle;

  bool contains(double u, double v) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double du = u - cu, dv = v - cv;
    const double lu = c * du + s * dv, lv = -s * du + c * dv;
    return (lu * lu) / (au * au) + (lv * lv) / (av * av) <= 1.0;
  }
};

struct HeadPose {
  double cu, cv, scale_u, scale_v, angle;

  // Local (head-frame) point to image-frame normalised coordinates.
  std::pair<double, double> to_image(double lu, double lv) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {cu + c * lu - s * lv, cv + s * lu + c * lv};
  }
  Ellipse layer(double inset) const {
    return {cu, cv, kSkinAxisU * scale_u - inset, kSkinAxisV * scale_v - inset, angle};
  }
};

}  // namespace

void PhantomSpec::validate() const {
  if (height < 16 || width < 16) throw ConfigError("phantom: resolution must be at least 16x16");
  if (!(center_jitter >= 0.0 && axis_jitter >= 0.0 && axis_jitter < 0.5 && rotation_jitter >= 0.0))
    throw ConfigError("phantom: jitter ranges must be non-negative (axis_jitter < 0.5)");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("phantom: noise_sigma must be >= 0");
  for (double m : class_means)
    if (!std::isfinite(m)) throw ConfigError("phantom: class means must be finite");

  const double extent = center_jitter + std::max(kSkinAxisU, kSkinAxisV) * (1.0 + axis_jitter);
  if (extent > 0.98) throw ConfigError("phantom: head does not fit inside the image under the jitter ranges");

  const double px_per_unit = 0.5 * double(std::min(height, width));
  const double thinnest = std::min({kBoneInset, kCsfInset - kBoneInset, kGmInset - kCsfInset, kWmInset - kGmInset});
  if (thinnest * px_per_unit < 1.5)
    throw ConfigError("phantom: tissue layers thinner than 1.5 px at " + std::to_string(height) + "x" +
                      std::to_string(width));

  // A disk of radius r covers at most (floor(2r) + 1)^2 lattice points.
  const auto span_h = std::floor(2.0 * kEyeRadius * 0.5 * double(height)) + 1.0;
  const auto span_w = std::floor(2.0 * kEyeRadius * 0.5 * double(width)) + 1.0;
  if (2.0 * span_h * span_w >= 0.005 * double(height * width))
    throw ConfigError("phantom: eyes cannot stay below 0.5% of pixels at this resolution");
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t index) {
  spec.validate();
  auto rng = seeded_engine({spec.seed, index, kPhantomStream});
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  HeadPose pose;
  pose.cu = spec.center_jitter * unit(rng);
  pose.cv = spec.center_jitter * unit(rng);
  pose.scale_u = 1.0 + spec.axis_jitter * unit(rng);
  pose.scale_v = 1.0 + spec.axis_jitter * unit(rng);
  pose.angle = spec.rotation_jitter * unit(rng);

  const Ellipse skin = pose.layer(0.0), bone = pose.layer(kBoneInset), csf = pose.layer(kCsfInset),
                gm = pose.layer(kGmInset), wm = pose.layer(kWmInset);

  std::vector<Ellipse> ventricles;
  for (double side : {-1.0, 1.0}) {
    auto [u, v] = pose.to_image(0.10 * side, -0.02);
    ventricles.push_back({u, v, 0.05, 0.16, pose.angle + 0.3 * side});
  }
  const double bone_mid_v = -(kSkinAxisV * pose.scale_v - 0.5 * (kBoneInset + kCsfInset));
  auto [cav_u, cav_v] = pose.to_image(0.0, bone_mid_v);
  const Ellipse cavity{cav_u, cav_v, kCavityHalfU, kCavityHalfV, pose.angle};

  std::vector<Ellipse> eyes;
  const double eye_ring_u = kSkinAxisU * pose.scale_u - 0.5 * kBoneInset;
  const double eye_ring_v = kSkinAxisV * pose.scale_v - 0.5 * kBoneInset;
  for (double side : {-1.0, 1.0}) {
    auto [u, v] = pose.to_image(eye_ring_u * std::sin(kEyeAngle * side), -eye_ring_v * std::cos(kEyeAngle));
    eyes.push_back({u, v, kEyeRadius, kEyeRadius, 0.0});
  }

  const Index h = spec.height, w = spec.width;
  Phantom out{Tensor({1, h, w}), LabelMap::Zero(h, w)};
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const double u = (double(x) + 0.5 - 0.5 * double(w)) / (0.5 * double(w));
      const double v = (double(y) + 0.5 - 0.5 * double(h)) / (0.5 * double(h));
      Tissue t = Tissue::Background;
      if (skin.contains(u, v)) {
        t = !bone.contains(u, v)  ? Tissue::Skin
            : !csf.contains(u, v) ? Tissue::Bone
            : !gm.contains(u, v)  ? Tissue::CSF
            : !wm.contains(u, v)  ? Tissue::GM
                                  : Tissue::WM;
        if (t == Tissue::WM && (ventricles[0].contains(u, v) || ventricles[1].contains(u, v))) t = Tissue::Ventricles;
        if (t == Tissue::Bone && cavity.contains(u, v)) t = Tissue::Cavities;
        if (eyes[0].contains(u, v) || eyes[1].contains(u, v)) t = Tissue::Eyes;
      }
      out.labels(y, x) = std::uint8_t(t);
      const double mean = spec.class_means[std::size_t(t)];
      out.image[y * w + x] = float(mean + spec.noise_sigma * noise(rng));
    }
  return out;
}

double bhattacharyya_coefficient(double mean_a, double sigma_a, double mean_b, double sigma_b) {
  const double va = sigma_a * sigma_a, vb = sigma_b * sigma_b;
  const double distance =
      0.25 * (mean_a - mean_b) * (mean_a - mean_b) / (va + vb) + 0.5 * std::log((va + vb) / (2.0 * sigma_a * sigma_b));
  return std::exp(-distance);
}

void NoiseSpec::validate() const {
  if (band_width < 0) throw ConfigError("noise: band_width must be >= 0");
  for (const SwapPair& p : swap_pairs) {
    if (p.class_a < 0 || p.class_a >= 256 || p.class_b < 0 || p.class_b >= 256 || p.class_a == p.class_b)
      throw ConfigError("noise: swap pair classes must be distinct valid indices");
    if (!(p.rate >= 0.0 && p.rate <= 1.0)) throw ConfigError("noise: swap rates must lie in [0, 1]");
  }
}

NoiseSpec NoiseSpec::preset(std::string_view name, std::uint64_t seed) {
  if (name == "default") {
    return NoiseSpec{{{int(Tissue::CSF), int(Tissue::Bone), 0.3}, {int(Tissue::Cavities), int(Tissue::Bone), 0.3}},
                     2,
                     seed};
  }
  if (name == "none") return NoiseSpec{{}, 2, seed};
  throw ConfigError("unknown noise preset '" + std::string(name) + "' (expected default or none)");
}

namespace {

// mask(y, x) is true when class c occurs within the Chebyshev radius around (y, x).
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> near_class(const LabelMap& labels, int c,
                                                                              int radius) {
  const Index h = labels.rows(), w = labels.cols();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows_hit(h, w), hit(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      bool any = false;
      for (Index xx = std::max<Index>(0, x - radius); xx <= std::min<Index>(w - 1, x + radius) && !any; ++xx)
        any = labels(y, xx) == c;
      rows_hit(y, x) = any;
    }
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      bool any = false;
      for (Index yy = std::max<Index>(0, y - radius); yy <= std::min<Index>(h - 1, y + radius) && !any; ++yy)
        any = rows_hit(yy, x);
      hit(y, x) = any;
    }
  return hit;
}

}  // namespace

LabelMap corrupt_labels(const LabelMap& labels, const NoiseSpec& noise) {
  noise.validate();
  using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<std::pair<Mask, Mask>> near;  // (near a, near b) per pair
  for (const SwapPair& p : noise.swap_pairs)
    near.emplace_back(near_class(labels, p.class_a, noise.band_width), near_class(labels, p.class_b, noise.band_width));

  auto rng = seeded_engine({noise.seed, kNoiseStream});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabelMap out = labels;
  for (Index y = 0; y < labels.rows(); ++y)
    for (Index x = 0; x < labels.cols(); ++x) {
      const int c = labels(y, x);
      for (std::size_t i = 0; i < noise.swap_pairs.size(); ++i) {
        const SwapPair& p = noise.swap_pairs[i];
        int target = -1;
        if (c == p.class_a && near[i].second(y, x)) target = p.class_b;
        else if (c == p.class_b && near[i].first(y, x)) target = p.class_a;
        if (target < 0) continue;
        if (unit(rng) < p.rate) {
          out(y, x) = std::uint8_t(target);
          break;
        }
      }
    }
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& f) {
  if (!(f.train >= 0.0 && f.val >= 0.0 && f.test >= 0.0) || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  // Tolerance keeps products such as 0.2 * 10 from flooring to 1.
  const auto floor_of = [n](double frac) { return std::size_t(std::floor(frac * double(n) + 1e-9)); };
  const std::size_t val = floor_of(f.val), test = floor_of(f.test);
  return {n - val - test, val, test};
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == split) out.push_back(i);
  return out;
}

void Dataset::validate() const {
  const std::size_t n = images.size();
  if (clean_labels.size() != n || noisy_labels.size() != n || splits.size() != n)
    throw ShapeError("dataset: images, labels and splits must have equal length");
  for (const Tensor& img : images)
    if (img.shape() != Shape{1, height, width}) throw ShapeError("dataset: image shape " + shape_string(img.shape()));
  check_label_batch(clean_labels, height, width, class_count);
  check_label_batch(noisy_labels, height, width, class_count);
}

Dataset build_dataset(std::size_t n, const PhantomSpec& spec, const NoiseSpec& noise, const SplitFractions& fractions,
                      std::uint64_t seed) {
  if (n < 5) throw ConfigError("build_dataset: need at least 5 samples to populate every split");
  spec.validate();
  noise.validate();
  const auto sizes = split_sizes(n, fractions);
  if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0)
    throw ConfigError("build_dataset: split fractions leave a split empty");

  Dataset ds;
  ds.height = spec.height;
  ds.width = spec.width;
  for (std::size_t i = 0; i < n; ++i) {
    Phantom ph = generate_phantom(spec, i);
    NoiseSpec sample_noise = noise;
    sample_noise.seed = seeded_engine({noise.seed, i, kNoiseStream})();
    ds.noisy_labels.push_back(corrupt_labels(ph.labels, sample_noise));
    ds.clean_labels.push_back(std::move(ph.labels));
    ds.images.push_back(std::move(ph.image));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = seeded_engine({seed, kSplitStream});
  std::shuffle(order.begin(), order.end(), rng);
  ds.splits.assign(n, Split::Train);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= sizes[0] + sizes[1]) ds.splits[order[i]] = Split::Test;
    else if (i >= sizes[0]) ds.splits[order[i]] = Split::Val;
  }
  return ds;
}

Tensor stack_images(const Dataset& dataset, std::span<const std::size_t> indices) {
  const Index hw = dataset.height * dataset.width;
  Tensor batch({Index(indices.size()), 1, dataset.height, dataset.width});
  for (std::size_t i = 0; i < indices.size(); ++i)
    batch.vec().segment(Index(i) * hw, hw) = dataset.images.at(indices[i]).vec();
  return batch;
}

}  // namespace rseg
