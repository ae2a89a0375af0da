#include "kga/generate.hpp"

#include "kga/rng.hpp"

namespace kga {

namespace {

constexpr std::uint64_t kWorldStream = 0x776f726c64;  // "world"
constexpr std::uint64_t kNoiseStream = 0x6e6f697365;  // "noise"

}  // namespace

void GenerateConfig::validate() const {
  if (n_sequences < 1) throw Error(ErrorKind::kConfig, "generate.n_sequences must be >= 1");
  if (n_frames < 2) throw Error(ErrorKind::kConfig, "generate.n_frames must be >= 2");
  if (fps < 1) throw Error(ErrorKind::kConfig, "generate.fps must be >= 1");
}

WorldConfig world_for_sequence(const WorldConfig& base, std::size_t index) {
  WorldConfig w = base;
  w.seed = stream_seed({base.seed, kWorldStream, index});
  return w;
}

NoiseConfig noise_for_sequence(const NoiseConfig& base, std::size_t index) {
  NoiseConfig n = base;
  n.seed = stream_seed({base.seed, kNoiseStream, index});
  return n;
}

std::vector<std::vector<ObjectSet>> simulate_truth(const WorldConfig& world, Index n_sequences, Index n_frames) {
  world.validate();
  std::vector<std::vector<ObjectSet>> out;
  out.reserve(static_cast<std::size_t>(n_sequences));
  for (Index i = 0; i < n_sequences; ++i) {
    out.push_back(simulate(world_for_sequence(world, static_cast<std::size_t>(i)), n_frames));
  }
  return out;
}

SequenceRecord corrupt_sequence(std::span<const ObjectSet> truth, const NoiseConfig& noise, Index height, Index width,
                                std::uint16_t fps) {
  noise.validate();
  SequenceRecord r;
  r.height = height;
  r.width = width;
  r.fps = fps;
  r.frames.reserve(truth.size());
  for (std::size_t t = 0; t < truth.size(); ++t) {
    CorruptedFrame c = corrupt_frame(truth[t], noise, t, height, width);
    r.frames.push_back({std::move(c.measurement), std::move(c.truth)});
  }
  return r;
}

std::vector<SequenceRecord> generate_dataset(const WorldConfig& world, const NoiseConfig& noise,
                                             const GenerateConfig& config) {
  config.validate();
  noise.validate();
  const auto truth = simulate_truth(world, config.n_sequences, config.n_frames);
  std::vector<SequenceRecord> out;
  out.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.push_back(corrupt_sequence(truth[i], noise_for_sequence(noise, i), world.height, world.width, config.fps));
  }
  return out;
}

}  // namespace kga
