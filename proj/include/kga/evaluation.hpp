#pragma once

// Noise-condition comparison, naive baselines, latency benchmark and the
// host/artifact metadata written alongside reports.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kga/generate.hpp"
#include "kga/training.hpp"

namespace kga {

struct NoiseCondition {
  std::string name;
  NoiseConfig noise;
  /// BCE previously reported for this condition on synthetic data, by model
  /// name. Context only; the averaging behind those numbers is unknown.
  std::optional<double> reference_kga;
  std::optional<double> reference_convgru;
};

/// miss-only, shift-only, both and a noiseless control, with rates taken
/// from `base` (miss 0.8 / shift 0.1 by default) and its seed.
std::vector<NoiseCondition> standard_conditions(const NoiseConfig& base);

struct BaselineScores {
  double copy_last = 0.0;    // measurement_t, clamped, as the prediction for truth_{t+1}
  double always_free = 0.0;  // epsilon everywhere
};

BaselineScores naive_baselines(std::span<const SequenceRecord> dataset);

struct ConditionResult {
  std::string condition;
  std::string model;
  double bce = 0.0;
  std::size_t n_frames = 0;  // scored (prediction, target) pairs
  std::optional<double> reference;
};

struct ConditionTable {
  std::vector<ConditionResult> rows;
  std::string truth_sha256;  // identical for every condition by construction, verified
  bool kga_untrained = false;
  bool convgru_untrained = false;

  /// condition,model,bce,n_frames,reference_bce
  std::string csv() const;
  std::string summary() const;
};

/// Corrupts the shared truth sequences under every condition and scores
/// KGA, ConvGRU and the naive baselines. Throws kInvalidArgument if the
/// truth frames of any condition differ from the first (hash check).
ConditionTable run_condition_table(const KgaModel& kga, const ConvGruModel& convgru,
                                   std::span<const std::vector<ObjectSet>> truth, Index height, Index width,
                                   std::span<const NoiseCondition> conditions);

struct BenchConfig {
  Index frames = 1000;
  Index warmup = 100;
  Index height = 50;
  Index width = 50;
  bool single_precision = false;
  std::uint64_t seed = 7;

  void validate() const;
};

struct BenchResult {
  std::string model;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  Index param_count = 0;
  Index frames = 0;
  bool single_precision = false;
  std::vector<std::string> warnings;
};

/// Times repeated single-frame steps on a simulated noisy stream. Warmup
/// frames are run but not recorded.
template <class Core>
BenchResult bench_latency(const RecurrentModel<Core>& model, const BenchConfig& config);

/// bench results as model,median_ms,p95_ms,param_count,frames,precision
std::string bench_csv(std::span<const BenchResult> results);

struct HostInfo {
  std::string cpu_model;
  unsigned hardware_threads = 0;
  unsigned eigen_threads = 0;
  std::string compiler;
};

HostInfo host_info();

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Hash over every truth frame of the records, in order.
std::string truth_sha256(std::span<const SequenceRecord> records);

}  // namespace kga
