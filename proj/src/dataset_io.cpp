#include "kga/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>

namespace kga {

namespace {

constexpr char kOgsqMagic[5] = {'O', 'G', 'S', 'Q', '1'};
constexpr std::uint16_t kOgsqVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return value;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::kFormat,
                  std::string("truncated stream while reading ") + what, static_cast<std::uint64_t>(bytes_.size()));
    }
  }

  std::size_t pos() const { return pos_; }
  const char* here() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string slurp(std::istream& source) {
  return std::string(std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>());
}

GridFrame read_plane(ByteReader& in, Index height, Index width, const char* what) {
  const std::size_t n = static_cast<std::size_t>(height * width);
  in.need(n, what);
  GridFrame frame(height, width);
  const auto* src = reinterpret_cast<const std::uint8_t*>(in.here());
  for (std::size_t k = 0; k < n; ++k) {
    if (src[k] > 1) {
      throw Error(ErrorKind::kFormat, std::string("non-binary byte ") + std::to_string(src[k]) + " in " + what,
                  static_cast<std::uint64_t>(in.pos() + k));
    }
  }
  std::copy(src, src + n, frame.data());
  in.skip(n);
  return frame;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <typename T>
T parse_field(const std::string& text, std::size_t line, const char* name) {
  std::istringstream ss(text);
  T value{};
  ss >> value;
  if (!ss || !(ss >> std::ws).eof()) {
    throw Error(ErrorKind::kFormat, std::string("bad ") + name + " '" + text + "'", line);
  }
  return value;
}

}  // namespace

void SequenceRecord::validate() const {
  if (height <= 0 || width <= 0 || height > 0xffff || width > 0xffff) {
    throw Error(ErrorKind::kInvalidArgument, "record extent out of range");
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const FramePair& f = frames[t];
    if (f.measurement.rows() != height || f.measurement.cols() != width || f.truth.rows() != height ||
        f.truth.cols() != width) {
      throw Error(ErrorKind::kShapeMismatch, "frame " + std::to_string(t) + " extent differs from record");
    }
    if (!is_binary(f.measurement) || !is_binary(f.truth)) {
      throw Error(ErrorKind::kInvalidArgument, "frame " + std::to_string(t) + " is not binary");
    }
  }
}

void write_ogsq(const SequenceRecord& record, std::ostream& sink) {
  record.validate();
  if (record.frames.size() > 0xffffffffULL) throw Error(ErrorKind::kInvalidArgument, "too many frames");
  std::string header(kOgsqMagic, sizeof(kOgsqMagic));
  put_le<std::uint16_t>(header, kOgsqVersion);
  put_le<std::uint16_t>(header, static_cast<std::uint16_t>(record.height));
  put_le<std::uint16_t>(header, static_cast<std::uint16_t>(record.width));
  put_le<std::uint32_t>(header, static_cast<std::uint32_t>(record.frames.size()));
  put_le<std::uint16_t>(header, record.fps);
  sink.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto plane = static_cast<std::streamsize>(record.height * record.width);
  for (const FramePair& f : record.frames) {
    sink.write(reinterpret_cast<const char*>(f.measurement.data()), plane);
    sink.write(reinterpret_cast<const char*>(f.truth.data()), plane);
  }
  if (!sink) throw Error(ErrorKind::kIo, "failed writing OGSQ1 stream");
}

SequenceRecord read_ogsq(std::istream& source) {
  const std::string bytes = slurp(source);
  ByteReader in(bytes);
  in.need(sizeof(kOgsqMagic), "magic");
  if (!std::equal(kOgsqMagic, kOgsqMagic + sizeof(kOgsqMagic), in.here())) {
    throw Error(ErrorKind::kFormat, "bad magic, expected OGSQ1", 0);
  }
  in.skip(sizeof(kOgsqMagic));
  const std::size_t version_at = in.pos();
  const auto version = in.get_le<std::uint16_t>("version");
  if (version != kOgsqVersion) {
    throw Error(ErrorKind::kFormat, "unsupported version " + std::to_string(version), version_at);
  }
  SequenceRecord record;
  const std::size_t extent_at = in.pos();
  record.height = in.get_le<std::uint16_t>("height");
  record.width = in.get_le<std::uint16_t>("width");
  if (record.height == 0 || record.width == 0) throw Error(ErrorKind::kFormat, "zero extent", extent_at);
  const auto count = in.get_le<std::uint32_t>("frame count");
  record.fps = in.get_le<std::uint16_t>("fps");
  record.frames.reserve(std::min<std::size_t>(count, 1 << 16));
  for (std::uint32_t t = 0; t < count; ++t) {
    GridFrame m = read_plane(in, record.height, record.width, "measurement");
    GridFrame y = read_plane(in, record.height, record.width, "truth");
    record.frames.push_back(FramePair{std::move(m), std::move(y)});
  }
  if (in.pos() != bytes.size()) {
    throw Error(ErrorKind::kFormat, "trailing bytes after last frame", in.pos());
  }
  return record;
}

void save_ogsq(const SequenceRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  write_ogsq(record, out);
}

SequenceRecord load_ogsq(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open: " + path.string());
  try {
    return read_ogsq(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<SequenceRecord> load_ogsq_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ogsq") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<SequenceRecord> records;
  records.reserve(paths.size());
  for (const auto& p : paths) records.push_back(load_ogsq(p));
  return records;
}

std::vector<TrackRow> read_tracks_csv(std::istream& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(source, line)) throw Error(ErrorKind::kFormat, "empty track file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "frame,object_id,x,y,radius") {
    throw Error(ErrorKind::kFormat, "expected header 'frame,object_id,x,y,radius'", 1);
  }
  std::vector<TrackRow> rows;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 5) throw Error(ErrorKind::kFormat, "expected 5 fields", line_no);
    TrackRow row;
    row.frame_index = parse_field<std::int64_t>(fields[0], line_no, "frame");
    row.object_id = parse_field<std::int64_t>(fields[1], line_no, "object_id");
    row.x = parse_field<double>(fields[2], line_no, "x");
    row.y = parse_field<double>(fields[3], line_no, "y");
    row.radius = parse_field<double>(fields[4], line_no, "radius");
    rows.push_back(row);
  }
  return rows;
}

void write_tracks_csv(std::span<const TrackRow> rows, std::ostream& sink) {
  sink << "frame,object_id,x,y,radius\n";
  char buf[160];
  for (const TrackRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(r.frame_index),
                  static_cast<long long>(r.object_id), r.x, r.y, r.radius);
    sink << buf;
  }
}

SequenceRecord tracks_to_sequence(std::span<const TrackRow> rows, Index height, Index width,
                                  const NoiseConfig& noise, Index min_frames) {
  noise.validate();
  std::int64_t last_frame = -1;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const TrackRow& r = rows[k];
    if (r.frame_index < 0) throw Error(ErrorKind::kInvalidArgument, "negative frame index", k);
    if (r.frame_index < last_frame) throw Error(ErrorKind::kInvalidArgument, "rows not sorted by frame", k);
    if (!(r.x >= 0.0 && r.x < static_cast<double>(width) && r.y >= 0.0 && r.y < static_cast<double>(height))) {
      throw Error(ErrorKind::kInvalidArgument, "position out of bounds", k);
    }
    if (!(r.radius > 0.0)) throw Error(ErrorKind::kInvalidArgument, "radius must be positive", k);
    last_frame = r.frame_index;
  }

  const Index n_frames = std::max<Index>(min_frames, static_cast<Index>(last_frame + 1));
  std::vector<ObjectSet> per_frame(static_cast<std::size_t>(n_frames));
  for (const TrackRow& r : rows) {
    per_frame[static_cast<std::size_t>(r.frame_index)].push_back(Object{r.x, r.y, r.radius, r.object_id});
  }

  SequenceRecord record;
  record.height = height;
  record.width = width;
  record.frames.reserve(per_frame.size());
  for (std::size_t t = 0; t < per_frame.size(); ++t) {
    CorruptedFrame c = corrupt_frame(per_frame[t], noise, t, height, width);
    record.frames.push_back(FramePair{std::move(c.measurement), std::move(c.truth)});
  }
  return record;
}

std::vector<TrackRow> objects_to_tracks(std::span<const ObjectSet> frames) {
  std::vector<TrackRow> rows;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (const Object& o : frames[t]) {
      rows.push_back(TrackRow{static_cast<std::int64_t>(t), o.id, o.x, o.y, o.radius});
    }
  }
  return rows;
}

ByteImage binary_to_gray(const GridFrame& frame) {
  return (frame.array() * std::uint8_t{255}).matrix();
}

ByteImage unit_to_gray(const ProbFrame<double>& values) {
  return values.unaryExpr([](double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
  });
}

void write_pgm(const std::filesystem::path& path, const ByteImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

ByteImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open: " + path.string());
  std::string magic;
  Index width = 0, height = 0;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P5" || width <= 0 || height <= 0 || maxval != 255) {
    throw Error(ErrorKind::kFormat, "unsupported PGM header in " + path.string(), 0);
  }
  in.get();  // single whitespace after maxval
  ByteImage image(height, width);
  in.read(reinterpret_cast<char*>(image.data()), static_cast<std::streamsize>(image.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.size())) {
    throw Error(ErrorKind::kFormat, "truncated PGM payload in " + path.string(),
                static_cast<std::uint64_t>(in.gcount()));
  }
  return image;
}

std::filesystem::path frame_image_path(const std::filesystem::path& dir, std::size_t t, const std::string& channel) {
  char name[64];
  std::snprintf(name, sizeof(name), "frame_%05zu_", t);
  return dir / (name + channel + ".pgm");
}

std::vector<std::filesystem::path> export_frames(const SequenceRecord& record, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  for (std::size_t t = 0; t < record.frames.size(); ++t) {
    written.push_back(frame_image_path(dir, t, "measurement"));
    write_pgm(written.back(), binary_to_gray(record.frames[t].measurement));
    written.push_back(frame_image_path(dir, t, "truth"));
    write_pgm(written.back(), binary_to_gray(record.frames[t].truth));
  }
  return written;
}

std::vector<std::filesystem::path> export_frames(std::span<const ProbFrame<double>> frames,
                                                 const std::filesystem::path& dir, const std::string& channel) {
  std::vector<std::filesystem::path> written;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    written.push_back(frame_image_path(dir, t, channel));
    write_pgm(written.back(), unit_to_gray(frames[t]));
  }
  return written;
}

}  // namespace kga
