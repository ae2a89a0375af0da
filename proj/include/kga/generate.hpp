#pragma once

// Synthetic datasets: independent worlds, each corrupted with its own noise
// stream. Sequence i of a dataset derives its world and noise seeds from the
// base seeds and i, so any sequence can be regenerated alone.

#include <cstdint>
#include <vector>

#include "kga/boids.hpp"
#include "kga/dataset_io.hpp"
#include "kga/noise.hpp"

namespace kga {

struct GenerateConfig {
  Index n_sequences = 40;
  Index n_frames = 200;
  std::uint16_t fps = 30;

  void validate() const;
};

WorldConfig world_for_sequence(const WorldConfig& base, std::size_t index);
NoiseConfig noise_for_sequence(const NoiseConfig& base, std::size_t index);

/// Ground-truth object sets for each sequence.
std::vector<std::vector<ObjectSet>> simulate_truth(const WorldConfig& world, Index n_sequences, Index n_frames);

/// Corrupts one truth sequence frame by frame.
SequenceRecord corrupt_sequence(std::span<const ObjectSet> truth, const NoiseConfig& noise, Index height, Index width,
                                std::uint16_t fps = 30);

/// simulate_truth followed by corrupt_sequence with per-sequence noise seeds.
std::vector<SequenceRecord> generate_dataset(const WorldConfig& world, const NoiseConfig& noise,
                                             const GenerateConfig& config);

}  // namespace kga
