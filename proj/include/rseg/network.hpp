#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rseg/ops.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

/// Topology of the U-Net style segmenter.
struct NetworkSpec {
  int in_channels = 1;
  int num_classes = 9;
  int base_width = 16;
  /// Number of 2x downsampling stages; inputs must be divisible by 2^depth.
  int depth = 3;
  std::uint64_t seed = 0;

  void validate() const;
  /// Throws ShapeError unless height and width are positive multiples of 2^depth.
  void check_resolution(Index height, Index width) const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

std::string to_string(const NetworkSpec& spec);

struct ParameterShape {
  std::string name;
  Shape shape;
};

/**
 * Ordered names and shapes of every trainable tensor for a spec.
 *
 * Each level holds two 3x3 conv layers (weight then bias); the order is
 * encoder levels top-down, the bottleneck, decoder levels bottom-up, and a
 * final 1x1 projection named "head".
 */
std::vector<ParameterShape> parameter_layout(const NetworkSpec& spec);

template <typename Scalar>
struct NamedTensor {
  std::string name;
  BasicTensor<Scalar> value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

template <typename Scalar>
class BasicParameterSet {
 public:
  BasicParameterSet() = default;
  BasicParameterSet(NetworkSpec spec, std::vector<NamedTensor<Scalar>> tensors);

  /// All-zero tensors laid out for `spec`.
  static BasicParameterSet Zero(const NetworkSpec& spec);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t count() const { return tensors_.size(); }
  Index parameter_count() const;

  NamedTensor<Scalar>& operator[](std::size_t i) { return tensors_[i]; }
  const NamedTensor<Scalar>& operator[](std::size_t i) const { return tensors_[i]; }
  const BasicTensor<Scalar>& at(std::string_view name) const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  template <typename NewScalar>
  BasicParameterSet<NewScalar> cast() const {
    std::vector<NamedTensor<NewScalar>> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back({t.name, t.value.template cast<NewScalar>()});
    return BasicParameterSet<NewScalar>(spec_, std::move(out));
  }

  friend bool operator==(const BasicParameterSet&, const BasicParameterSet&) = default;

 private:
  NetworkSpec spec_;
  std::vector<NamedTensor<Scalar>> tensors_;
};

using ParameterSet = BasicParameterSet<float>;
using ParameterSetD = BasicParameterSet<double>;

/// Kaiming-normal kernels (std = sqrt(2 / fan_in)) and zero biases, seeded by spec.seed.
ParameterSet build_and_init(const NetworkSpec& spec);

/// Intermediate values kept from a forward pass for the matching backward pass.
template <typename Scalar>
struct ForwardCache {
  BasicTensor<Scalar> logits;
  std::vector<BasicTensor<Scalar>> conv_inputs;
  std::vector<BasicTensor<Scalar>> conv_outputs;
};

template <typename Scalar>
ForwardCache<Scalar> forward_cached(const BasicParameterSet<Scalar>& params, const BasicTensor<Scalar>& images);

/// images [N, in_channels, H, W] -> logits [N, num_classes, H, W].
template <typename Scalar>
BasicTensor<Scalar> forward(const BasicParameterSet<Scalar>& params, const BasicTensor<Scalar>& images);

template <typename Scalar>
BasicParameterSet<Scalar> backward(const BasicParameterSet<Scalar>& params, const ForwardCache<Scalar>& cache,
                                   const BasicTensor<Scalar>& grad_logits);

/// Recomputes the forward pass, then backpropagates grad_logits to every parameter.
template <typename Scalar>
BasicParameterSet<Scalar> backward(const BasicParameterSet<Scalar>& params, const BasicTensor<Scalar>& images,
                                   const BasicTensor<Scalar>& grad_logits);

// Checkpoint persistence. Layout: "RSEGCKPT", u32 version, the NetworkSpec
// fields, u32 tensor count, then per tensor: u32 name length, name bytes,
// u32 rank, u32 dims, little-endian f32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ParameterSet& params);
ParameterSet parse_checkpoint(std::string_view bytes, const std::optional<NetworkSpec>& expected = std::nullopt);
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path,
                             const std::optional<NetworkSpec>& expected = std::nullopt);

}  // namespace rseg
