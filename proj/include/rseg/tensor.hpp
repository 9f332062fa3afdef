#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rseg/errors.hpp"

namespace rseg {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/**
 * Dense row-major tensor over an Eigen vector.
 *
 * The shape is dynamic; four-dimensional tensors follow the NCHW convention
 * used throughout the library. Element storage is exposed as an Eigen vector
 * so whole-tensor arithmetic can be written as Eigen expressions, and
 * per-(sample, channel) planes as row-major matrix maps.
 */
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(shape_size(shape_))) {
    check_dims();
  }

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data has " + std::to_string(data_.size()) + " elements, shape " +
                       shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)));
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Eigen::Map<const Vector>(values.begin(), Index(values.size()))) {}

  static BasicTensor Zero(Shape shape) { return BasicTensor(std::move(shape)); }

  static BasicTensor Constant(Shape shape, Scalar value) {
    const Index n = shape_size(shape);
    return BasicTensor(std::move(shape), Vector::Constant(n, value));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return Index(shape_.size()); }
  Index dim(Index i) const { return shape_.at(std::size_t(i)); }
  Index size() const { return data_.size(); }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // NCHW accessors; callers guarantee rank 4.
  Scalar& operator()(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const { return data_[offset(n, c, h, w)]; }

  PlaneMap plane(Index n, Index c) {
    return PlaneMap(data_.data() + offset(n, c, 0, 0), shape_[2], shape_[3]);
  }
  ConstPlaneMap plane(Index n, Index c) const {
    return ConstPlaneMap(data_.data() + offset(n, c, 0, 0), shape_[2], shape_[3]);
  }

  /// Same data, new shape of equal element count.
  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  template <typename NewScalar>
  BasicTensor<NewScalar> cast() const {
    return BasicTensor<NewScalar>(shape_, data_.template cast<NewScalar>());
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (Index d : shape_)
      if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape_));
  }

  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

inline void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
}

}  // namespace rseg
