#pragma once

// Object-level measurement corruption. Miss noise drops an object from a
// frame (packet loss); shift noise displaces it by a small integer offset
// (sensor inaccuracy). Every draw is keyed by (seed, frame, object id), so a
// frame's corruption does not depend on which other frames were processed.

#include <cstdint>

#include "kga/grid.hpp"

namespace kga {

struct NoiseConfig {
  double miss_rate = 0.8;
  double shift_rate = 0.1;
  int max_shift = 2;
  std::uint64_t seed = 2;

  void validate() const;
};

ObjectSet apply_miss(const ObjectSet& objects, const NoiseConfig& config, std::uint64_t frame_index);

/// Selected objects move by (dx, dy), each uniform on {-max_shift..max_shift},
/// (0, 0) excluded; results are clamped into [0, width) x [0, height).
ObjectSet apply_shift(const ObjectSet& objects, const NoiseConfig& config, std::uint64_t frame_index,
                      Index height, Index width);

struct CorruptedFrame {
  GridFrame measurement;
  GridFrame truth;
};

/// truth = rasterize(objects); measurement = rasterize(shift(miss(objects))).
CorruptedFrame corrupt_frame(const ObjectSet& objects, const NoiseConfig& config, std::uint64_t frame_index,
                             Index height, Index width);

}  // namespace kga
