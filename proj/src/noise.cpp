#include "kga/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kga/rng.hpp"

namespace kga {

namespace {

constexpr std::uint64_t kMissStream = 0x6d697373ULL;
constexpr std::uint64_t kShiftStream = 0x7368696674ULL;

SplitMix64 object_stream(const NoiseConfig& config, std::uint64_t tag, std::uint64_t frame, const Object& obj) {
  return SplitMix64(stream_seed({config.seed, tag, frame, static_cast<std::uint64_t>(obj.id)}));
}

}  // namespace

void NoiseConfig::validate() const {
  if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) throw Error(ErrorKind::kConfig, "noise.miss_rate must be in [0, 1]");
  if (!(shift_rate >= 0.0 && shift_rate <= 1.0)) throw Error(ErrorKind::kConfig, "noise.shift_rate must be in [0, 1]");
  if (max_shift < 1) throw Error(ErrorKind::kConfig, "noise.max_shift must be >= 1");
}

ObjectSet apply_miss(const ObjectSet& objects, const NoiseConfig& config, std::uint64_t frame_index) {
  ObjectSet kept;
  kept.reserve(objects.size());
  for (const Object& obj : objects) {
    SplitMix64 rng = object_stream(config, kMissStream, frame_index, obj);
    if (!(rng.uniform() < config.miss_rate)) kept.push_back(obj);
  }
  return kept;
}

ObjectSet apply_shift(const ObjectSet& objects, const NoiseConfig& config, std::uint64_t frame_index,
                      Index height, Index width) {
  const double x_max = std::nextafter(static_cast<double>(width), 0.0);
  const double y_max = std::nextafter(static_cast<double>(height), 0.0);
  ObjectSet out = objects;
  for (Object& obj : out) {
    SplitMix64 rng = object_stream(config, kShiftStream, frame_index, obj);
    if (!(rng.uniform() < config.shift_rate)) continue;
    std::uniform_int_distribution<int> offset(-config.max_shift, config.max_shift);
    int dx = 0;
    int dy = 0;
    while (dx == 0 && dy == 0) {
      dx = offset(rng);
      dy = offset(rng);
    }
    obj.x = std::clamp(obj.x + dx, 0.0, x_max);
    obj.y = std::clamp(obj.y + dy, 0.0, y_max);
  }
  return out;
}

CorruptedFrame corrupt_frame(const ObjectSet& objects, const NoiseConfig& config, std::uint64_t frame_index,
                             Index height, Index width) {
  const ObjectSet measured = apply_shift(apply_miss(objects, config, frame_index), config, frame_index, height, width);
  return CorruptedFrame{rasterize(measured, height, width), rasterize(objects, height, width)};
}

}  // namespace kga
