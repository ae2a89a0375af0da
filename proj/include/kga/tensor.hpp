#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "kga/error.hpp"

namespace kga {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Channel planes of a C×H×W field: one row per channel, H·W columns in
/// row-major cell order. Channel mixing is then a plain matrix product.
template <typename Scalar>
using Field = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using FieldMap = Eigen::Map<Field<Scalar>>;

template <typename Scalar>
using ConstFieldMap = Eigen::Map<const Field<Scalar>>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense n-d array, row-major.
template <typename Scalar>
class Tensor {
 public:
  using Values = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    values_ = Values::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Values values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_size(shape_)) {
      throw Error(ErrorKind::kShapeMismatch, "tensor of shape " + shape_string(shape_) +
                                                 " given " + std::to_string(values_.size()) +
                                                 " values");
    }
  }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.values_.setConstant(value);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const noexcept { return values_.size(); }

  Values& values() noexcept { return values_; }
  const Values& values() const noexcept { return values_; }
  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  /// First axis as rows, remaining axes flattened into columns.
  FieldMap<Scalar> planes() { return FieldMap<Scalar>(data(), shape_.front(), size() / shape_.front()); }
  ConstFieldMap<Scalar> planes() const {
    return ConstFieldMap<Scalar>(data(), shape_.front(), size() / shape_.front());
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.values_ == b.values_).all();
  }

 private:
  void check_shape() const {
    for (Index extent : shape_) {
      if (extent <= 0) {
        throw Error(ErrorKind::kShapeMismatch, "non-positive extent in shape " + shape_string(shape_));
      }
    }
  }

  Shape shape_;
  Values values_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

}  // namespace kga
