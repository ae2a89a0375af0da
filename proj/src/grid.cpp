#include "kga/grid.hpp"

#include <algorithm>
#include <cmath>

namespace kga {

GridFrame rasterize(std::span<const Object> objects, Index height, Index width) {
  GridFrame frame = GridFrame::Zero(height, width);
  for (const Object& obj : objects) {
    const Index i_lo = std::max<Index>(0, static_cast<Index>(std::floor(obj.y - obj.radius - 0.5)));
    const Index i_hi = std::min<Index>(height - 1, static_cast<Index>(std::ceil(obj.y + obj.radius - 0.5)));
    const Index j_lo = std::max<Index>(0, static_cast<Index>(std::floor(obj.x - obj.radius - 0.5)));
    const Index j_hi = std::min<Index>(width - 1, static_cast<Index>(std::ceil(obj.x + obj.radius - 0.5)));
    const double r2 = obj.radius * obj.radius;
    for (Index i = i_lo; i <= i_hi; ++i) {
      const double dy = (static_cast<double>(i) + 0.5) - obj.y;
      for (Index j = j_lo; j <= j_hi; ++j) {
        const double dx = (static_cast<double>(j) + 0.5) - obj.x;
        if (dx * dx + dy * dy <= r2) frame(i, j) = 1;
      }
    }
  }
  return frame;
}

}  // namespace kga
