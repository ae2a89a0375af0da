#include "kga/evaluation.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <thread>

#include <Eigen/Core>

#include "kga/kernels.hpp"

namespace kga {

namespace {

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error(ErrorKind::kIo, "sha256: digest initialisation failed");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error(ErrorKind::kIo, "sha256: update failed");
  }
  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), digest, &len) != 1) throw Error(ErrorKind::kIo, "sha256: final failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Smallest observable step of steady_clock, in microseconds.
double timer_resolution_us() {
  using clock = std::chrono::steady_clock;
  double best = 1e9;
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = clock::now();
    auto b = clock::now();
    while (b == a) b = clock::now();
    best = std::min(best, std::chrono::duration<double, std::micro>(b - a).count());
  }
  return best;
}

std::vector<GridFrame> bench_stream(const BenchConfig& config) {
  WorldConfig world;
  world.width = config.width;
  world.height = config.height;
  world.seed = config.seed;
  const auto objects = simulate(world, config.frames + config.warmup);
  NoiseConfig noise;
  noise.seed = config.seed;
  std::vector<GridFrame> frames;
  frames.reserve(objects.size());
  for (std::size_t t = 0; t < objects.size(); ++t) {
    frames.push_back(corrupt_frame(objects[t], noise, t, config.height, config.width).measurement);
  }
  return frames;
}

template <class Core, typename Scalar>
std::vector<double> time_steps(const RecurrentModel<Core>& model, const std::vector<GridFrame>& frames, Index warmup) {
  const NetWeights<Scalar> w = model.template weights<Scalar>();
  RecurrentState<Scalar> state = initial_state<Scalar>(frames.front().rows(), frames.front().cols());
  std::vector<double> ms;
  ms.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto start = std::chrono::steady_clock::now();
    StepOutput<Scalar> out = RecurrentModel<Core>::step_with(w, frames[t], state);
    const auto stop = std::chrono::steady_clock::now();
    state = std::move(out.state);
    if (static_cast<Index>(t) >= warmup) ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return ms;
}

}  // namespace

std::vector<NoiseCondition> standard_conditions(const NoiseConfig& base) {
  NoiseConfig miss = base, shift = base, both = base, none = base;
  miss.shift_rate = 0.0;
  shift.miss_rate = 0.0;
  none.miss_rate = 0.0;
  none.shift_rate = 0.0;
  return {
      {"miss-only", miss, 0.3306, 0.3265},
      {"shift-only", shift, 0.3227, 0.3235},
      {"both", both, 0.3351, 0.3312},
      {"none", none, std::nullopt, std::nullopt},
  };
}

BaselineScores naive_baselines(std::span<const SequenceRecord> dataset) {
  BaselineScores s;
  s.copy_last = evaluate_predictor(dataset, [](const SequenceRecord& r) {
    std::vector<ProbFrame<double>> out;
    out.reserve(r.frames.size());
    for (const FramePair& f : r.frames) {
      out.push_back(f.measurement.cast<double>().cwiseMax(kProbEpsilon).cwiseMin(1.0 - kProbEpsilon));
    }
    return out;
  });
  s.always_free = evaluate_predictor(dataset, [](const SequenceRecord& r) {
    return std::vector<ProbFrame<double>>(r.frames.size(), ProbFrame<double>::Constant(r.height, r.width, kProbEpsilon));
  });
  return s;
}

std::string ConditionTable::csv() const {
  std::ostringstream os;
  os << "condition,model,bce,n_frames,reference_bce\n";
  for (const ConditionResult& r : rows) {
    os << r.condition << ',' << r.model << ',' << full(r.bce) << ',' << r.n_frames << ','
       << (r.reference ? fixed(*r.reference, 4) : "") << '\n';
  }
  return os.str();
}

std::string ConditionTable::summary() const {
  std::ostringstream os;
  os << "Both models are trained once on miss+shift noise and scored on every condition.\n"
     << "Truth frames are shared across conditions (sha256 " << truth_sha256 << ").\n";
  if (kga_untrained) os << "WARNING: KGA checkpoint is untrained (fresh initialisation)\n";
  if (convgru_untrained) os << "WARNING: ConvGRU checkpoint is untrained (fresh initialisation)\n";
  os << "reference_bce: earlier synthetic-data figures, context only (averaging convention unknown)\n\n";
  os << std::left << std::setw(12) << "condition" << std::setw(12) << "model" << std::setw(14) << "bce"
     << std::setw(10) << "frames" << "reference\n";
  for (const ConditionResult& r : rows) {
    os << std::setw(12) << r.condition << std::setw(12) << r.model << std::setw(14) << fixed(r.bce) << std::setw(10)
       << r.n_frames << (r.reference ? fixed(*r.reference, 4) : "-") << '\n';
  }
  return os.str();
}

ConditionTable run_condition_table(const KgaModel& kga, const ConvGruModel& convgru,
                                   std::span<const std::vector<ObjectSet>> truth, Index height, Index width,
                                   std::span<const NoiseCondition> conditions) {
  if (truth.empty()) throw Error(ErrorKind::kInvalidArgument, "run_condition_table: no truth sequences");
  ConditionTable table;
  for (const NoiseCondition& c : conditions) {
    std::vector<SequenceRecord> records;
    records.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      records.push_back(corrupt_sequence(truth[i], noise_for_sequence(c.noise, i), height, width));
    }
    const std::string hash = truth_sha256(records);
    if (table.truth_sha256.empty()) {
      table.truth_sha256 = hash;
    } else if (hash != table.truth_sha256) {
      throw Error(ErrorKind::kInvalidArgument, "condition " + c.name + " does not share the truth sequences");
    }
    std::size_t pairs = 0;
    for (const SequenceRecord& r : records) pairs += r.frames.size() - 1;

    const BaselineScores base = naive_baselines(records);
    table.rows.push_back({c.name, std::string(KgaModel::name()), evaluate(kga, records), pairs, c.reference_kga});
    table.rows.push_back(
        {c.name, std::string(ConvGruModel::name()), evaluate(convgru, records), pairs, c.reference_convgru});
    table.rows.push_back({c.name, "copy-last", base.copy_last, pairs, std::nullopt});
    table.rows.push_back({c.name, "always-free", base.always_free, pairs, std::nullopt});
  }
  return table;
}

void BenchConfig::validate() const {
  if (frames < 1) throw Error(ErrorKind::kConfig, "bench.frames must be >= 1");
  if (warmup < 0) throw Error(ErrorKind::kConfig, "bench.warmup must be >= 0");
  if (height < 8 || width < 8) throw Error(ErrorKind::kConfig, "bench extent must be at least 8x8");
}

template <class Core>
BenchResult bench_latency(const RecurrentModel<Core>& model, const BenchConfig& config) {
  config.validate();
  Eigen::setNbThreads(1);
  const std::vector<GridFrame> frames = bench_stream(config);
  BenchResult r;
  r.model = std::string(Core::kName);
  r.param_count = model.count_params();
  r.single_precision = config.single_precision;
  const std::vector<double> ms = config.single_precision ? time_steps<Core, float>(model, frames, config.warmup)
                                                         : time_steps<Core, double>(model, frames, config.warmup);
  r.frames = static_cast<Index>(ms.size());
  r.median_ms = percentile(ms, 0.5);
  r.p95_ms = percentile(ms, 0.95);
  const double resolution = timer_resolution_us();
  if (resolution > 10.0) {
    r.warnings.push_back("timer resolution " + fixed(resolution, 1) + " us is coarser than 10 us");
  }
  if (config.frames < 1000) r.warnings.push_back("fewer than 1000 timed frames");
  return r;
}

template BenchResult bench_latency<GruArrayCore>(const KgaModel&, const BenchConfig&);
template BenchResult bench_latency<ConvGruCore>(const ConvGruModel&, const BenchConfig&);

std::string bench_csv(std::span<const BenchResult> results) {
  std::ostringstream os;
  os << "model,median_ms,p95_ms,param_count,frames,precision\n";
  for (const BenchResult& r : results) {
    os << r.model << ',' << fixed(r.median_ms, 4) << ',' << fixed(r.p95_ms, 4) << ',' << r.param_count << ','
       << r.frames << ',' << (r.single_precision ? "f32" : "f64") << '\n';
  }
  return os.str();
}

HostInfo host_info() {
  HostInfo h;
  std::ifstream cpu("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpu, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) h.cpu_model = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  if (h.cpu_model.empty()) h.cpu_model = "unknown";
  h.hardware_threads = std::thread::hardware_concurrency();
  h.eigen_threads = static_cast<unsigned>(Eigen::nbThreads());
#if defined(__clang__)
  h.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  h.compiler = "gcc " __VERSION__;
#else
  h.compiler = "unknown";
#endif
  return h;
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open: " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string truth_sha256(std::span<const SequenceRecord> records) {
  Sha256 h;
  for (const SequenceRecord& r : records) {
    const std::uint64_t extent[3] = {static_cast<std::uint64_t>(r.height), static_cast<std::uint64_t>(r.width),
                                     r.frames.size()};
    h.update(extent, sizeof(extent));
    for (const FramePair& f : r.frames) h.update(f.truth.data(), static_cast<std::size_t>(f.truth.size()));
  }
  return h.hex();
}

}  // namespace kga
