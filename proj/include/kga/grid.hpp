#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "kga/tensor.hpp"

namespace kga {

/// H×W binary occupancy, 1 = occupied.
using GridFrame = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H×W occupancy probabilities.
template <typename Scalar = double>
using ProbFrame = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A disk-shaped object in continuous cell coordinates (x along columns,
/// y along rows). `id` keys the object's noise stream.
struct Object {
  double x = 0.0;
  double y = 0.0;
  double radius = 2.0;
  std::int64_t id = 0;

  friend bool operator==(const Object&, const Object&) = default;
};

using ObjectSet = std::vector<Object>;

/// Cell (i, j) is occupied iff its center (j+0.5, i+0.5) lies within some
/// object's radius (inclusive).
GridFrame rasterize(std::span<const Object> objects, Index height, Index width);

inline bool is_binary(const GridFrame& frame) {
  return (frame.array() <= 1).all();
}

}  // namespace kga
