#pragma once

// Sequence container (OGSQ1), track CSV ingestion and PGM export.
//
// OGSQ1, little-endian:
//   "OGSQ1"  5 bytes magic
//   u16      version (1)
//   u16      height
//   u16      width
//   u32      frame_count
//   u16      fps
//   then frame_count × (measurement[h·w], truth[h·w]) bytes, each 0 or 1,
//   row-major.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kga/grid.hpp"
#include "kga/noise.hpp"

namespace kga {

struct FramePair {
  GridFrame measurement;
  GridFrame truth;

  friend bool operator==(const FramePair&, const FramePair&) = default;
};

struct SequenceRecord {
  Index height = 50;
  Index width = 50;
  std::uint16_t fps = 30;
  std::vector<FramePair> frames;

  void validate() const;
  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

inline constexpr std::size_t kOgsqHeaderBytes = 17;

void write_ogsq(const SequenceRecord& record, std::ostream& sink);
SequenceRecord read_ogsq(std::istream& source);
void save_ogsq(const SequenceRecord& record, const std::filesystem::path& path);
SequenceRecord load_ogsq(const std::filesystem::path& path);

/// All `*.ogsq` files of a directory, sorted by file name.
std::vector<SequenceRecord> load_ogsq_dir(const std::filesystem::path& dir);

struct TrackRow {
  std::int64_t frame_index = 0;
  std::int64_t object_id = 0;
  double x = 0.0;
  double y = 0.0;
  double radius = 2.0;
};

/// CSV with header `frame,object_id,x,y,radius`. Errors report the 1-based line.
std::vector<TrackRow> read_tracks_csv(std::istream& source);
void write_tracks_csv(std::span<const TrackRow> rows, std::ostream& sink);

/// Rows grouped by frame, corrupted frame by frame. The record has
/// max(min_frames, last frame + 1) frames; frames without rows are empty.
/// Errors report the 0-based row index.
SequenceRecord tracks_to_sequence(std::span<const TrackRow> rows, Index height, Index width,
                                  const NoiseConfig& noise, Index min_frames = 0);

/// Rows for a simulated object-set sequence, frame index = position in `frames`.
std::vector<TrackRow> objects_to_tracks(std::span<const ObjectSet> frames);

using ByteImage = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// {0,1} -> {0,255}.
ByteImage binary_to_gray(const GridFrame& frame);
/// [0,1] -> [0,255] linearly, rounding half up; values outside [0,1] saturate.
ByteImage unit_to_gray(const ProbFrame<double>& values);

void write_pgm(const std::filesystem::path& path, const ByteImage& image);
ByteImage read_pgm(const std::filesystem::path& path);

/// `frame_{t:05}_{channel}.pgm`.
std::filesystem::path frame_image_path(const std::filesystem::path& dir, std::size_t t, const std::string& channel);

/// One measurement and one truth image per frame. Returns the written paths.
std::vector<std::filesystem::path> export_frames(const SequenceRecord& record, const std::filesystem::path& dir);
std::vector<std::filesystem::path> export_frames(std::span<const ProbFrame<double>> frames,
                                                 const std::filesystem::path& dir, const std::string& channel);

}  // namespace kga
