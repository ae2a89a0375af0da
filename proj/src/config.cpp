#include "kga/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace kga {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw Error(ErrorKind::kConfig, std::string(key) + ": expected " + expected + ", got '" + std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

template <typename T>
std::string format(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<T>) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  } else {
    return std::to_string(v);
  }
}

template <typename T>
void assign(T& slot, std::string_view key, std::string_view value) {
  if constexpr (std::is_same_v<T, bool>) {
    slot = parse_bool(key, value);
  } else if constexpr (std::is_same_v<T, std::string>) {
    slot = std::string(value);
  } else if constexpr (std::is_same_v<T, std::uint16_t>) {
    const auto v = parse_number<std::uint32_t>(key, value);
    if (v > 0xffff) bad_value(key, value, "a 16-bit value");
    slot = static_cast<std::uint16_t>(v);
  } else {
    slot = parse_number<T>(key, value);
  }
}

struct Binding {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Access>
Binding bind(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return format(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, std::string_view v) { assign(access(c), key, v); }};
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> all = [] {
    std::vector<Binding> b{
        bind("world.width", [](RunConfig& c) -> auto& { return c.world.width; }),
        bind("world.height", [](RunConfig& c) -> auto& { return c.world.height; }),
        bind("world.n_agents", [](RunConfig& c) -> auto& { return c.world.n_agents; }),
        bind("world.radius", [](RunConfig& c) -> auto& { return c.world.radius; }),
        bind("world.separation_radius", [](RunConfig& c) -> auto& { return c.world.separation_radius; }),
        bind("world.separation_gain", [](RunConfig& c) -> auto& { return c.world.separation_gain; }),
        bind("world.max_turn", [](RunConfig& c) -> auto& { return c.world.max_turn; }),
        bind("world.speed", [](RunConfig& c) -> auto& { return c.world.speed; }),
        bind("world.seed", [](RunConfig& c) -> auto& { return c.world.seed; }),
        bind("noise.miss_rate", [](RunConfig& c) -> auto& { return c.noise.miss_rate; }),
        bind("noise.shift_rate", [](RunConfig& c) -> auto& { return c.noise.shift_rate; }),
        bind("noise.max_shift", [](RunConfig& c) -> auto& { return c.noise.max_shift; }),
        bind("noise.seed", [](RunConfig& c) -> auto& { return c.noise.seed; }),
        bind("generate.n_sequences", [](RunConfig& c) -> auto& { return c.generate.n_sequences; }),
        bind("generate.n_frames", [](RunConfig& c) -> auto& { return c.generate.n_frames; }),
        bind("generate.fps", [](RunConfig& c) -> auto& { return c.generate.fps; }),
        bind("train.model", [](RunConfig& c) -> auto& { return c.model; }),
        bind("train.init_seed", [](RunConfig& c) -> auto& { return c.init_seed; }),
        bind("train.learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; }),
        bind("train.unroll_length", [](RunConfig& c) -> auto& { return c.train.unroll_length; }),
        bind("train.batch", [](RunConfig& c) -> auto& { return c.train.batch; }),
        bind("train.max_epochs", [](RunConfig& c) -> auto& { return c.train.max_epochs; }),
        bind("train.patience", [](RunConfig& c) -> auto& { return c.train.patience; }),
        bind("train.min_delta", [](RunConfig& c) -> auto& { return c.train.min_delta; }),
        bind("train.validation_fraction", [](RunConfig& c) -> auto& { return c.train.validation_fraction; }),
        bind("train.steps_per_epoch", [](RunConfig& c) -> auto& { return c.train.steps_per_epoch; }),
        bind("train.seed", [](RunConfig& c) -> auto& { return c.train.seed; }),
        bind("eval.n_sequences", [](RunConfig& c) -> auto& { return c.eval.n_sequences; }),
        bind("eval.n_frames", [](RunConfig& c) -> auto& { return c.eval.n_frames; }),
        bind("eval.world_seed", [](RunConfig& c) -> auto& { return c.eval.world_seed; }),
        bind("eval.noise_seed", [](RunConfig& c) -> auto& { return c.eval.noise_seed; }),
        bind("bench.frames", [](RunConfig& c) -> auto& { return c.bench.frames; }),
        bind("bench.warmup", [](RunConfig& c) -> auto& { return c.bench.warmup; }),
        bind("bench.height", [](RunConfig& c) -> auto& { return c.bench.height; }),
        bind("bench.width", [](RunConfig& c) -> auto& { return c.bench.width; }),
        bind("bench.single_precision", [](RunConfig& c) -> auto& { return c.bench.single_precision; }),
        bind("bench.seed", [](RunConfig& c) -> auto& { return c.bench.seed; }),
        bind("viz.sequence", [](RunConfig& c) -> auto& { return c.viz.sequence; }),
        bind("viz.max_frames", [](RunConfig& c) -> auto& { return c.viz.max_frames; }),
        bind("viz.hidden", [](RunConfig& c) -> auto& { return c.viz.hidden; }),
    };
    std::sort(b.begin(), b.end(), [](const Binding& x, const Binding& y) { return x.key < y.key; });
    return b;
  }();
  return all;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& all = bindings();
  const auto it = std::find_if(all.begin(), all.end(), [&](const Binding& b) { return b.key == key; });
  if (it == all.end()) throw Error(ErrorKind::kConfig, "unknown key '" + std::string(key) + "'");
  it->set(*this, trim(value));
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Binding& b : bindings()) out.emplace_back(b.key, b.get(*this));
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::validate() const {
  world.validate();
  noise.validate();
  generate.validate();
  train.validate();
  bench.validate();
  if (model != "kga" && model != "convgru") {
    throw Error(ErrorKind::kConfig, "train.model must be kga or convgru, got '" + model + "'");
  }
  if (eval.n_sequences < 1 || eval.n_frames < 2) throw Error(ErrorKind::kConfig, "eval needs >= 1 sequence of >= 2 frames");
  if (viz.sequence < 0 || viz.max_frames < 0) throw Error(ErrorKind::kConfig, "viz values must be >= 0");
}

std::vector<ConfigEntry> parse_config_text(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::uint64_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::kConfig, "expected 'key = value'", line_no);
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::kConfig, "empty key", line_no);
    out.push_back({std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return out;
}

std::pair<std::string, std::string> parse_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || trim(text.substr(0, eq)).empty()) {
    throw Error(ErrorKind::kConfig, "expected key=value, got '" + std::string(text) + "'");
  }
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  RunConfig c;
  std::vector<ConfigEntry> entries;
  try {
    entries = parse_config_text(text);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what(), e.offset());
  }
  for (const ConfigEntry& e : entries) {
    try {
      c.set(e.key, e.value);
    } catch (const Error& err) {
      throw Error(err.kind(), path.string() + ": " + err.what(), e.line);
    }
  }
  return c;
}

}  // namespace kga
