#pragma once

// Resolved run configuration. Text form is one `key = value` per line with
// dotted keys; `#` starts a comment. Unknown keys and malformed values are
// rejected with the offending line.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kga/boids.hpp"
#include "kga/evaluation.hpp"
#include "kga/generate.hpp"
#include "kga/noise.hpp"
#include "kga/training.hpp"

namespace kga {

struct EvalConfig {
  Index n_sequences = 10;
  Index n_frames = 200;
  std::uint64_t world_seed = 1001;
  std::uint64_t noise_seed = 2001;
};

struct VizConfig {
  Index sequence = 0;    // index into the sorted data directory
  Index max_frames = 0;  // 0 = every frame
  bool hidden = true;    // also export hidden-state channels
};

struct RunConfig {
  WorldConfig world;
  NoiseConfig noise;
  GenerateConfig generate;
  TrainConfig train;
  std::string model = "kga";  // kga | convgru
  std::uint64_t init_seed = 1;
  EvalConfig eval;
  BenchConfig bench;
  VizConfig viz;

  /// Sets one dotted key from its text value.
  void set(std::string_view key, std::string_view value);
  /// Every key with its current value, sorted by key.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  void validate() const;
};

struct ConfigEntry {
  std::string key;
  std::string value;
  std::uint64_t line = 0;  // 1-based
};

/// Entries in file order. Syntax errors carry the line as their offset.
std::vector<ConfigEntry> parse_config_text(std::string_view text);

/// Parses `key=value` (the --set form).
std::pair<std::string, std::string> parse_assignment(std::string_view text);

RunConfig load_config(const std::filesystem::path& path);

}  // namespace kga
