#include "kga/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "kga/config.hpp"
#include "kga/evaluation.hpp"
#include "kga/generate.hpp"

namespace kga {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  bool force = false;
  std::string data;
  std::string kga_ckpt;
  std::string convgru_ckpt;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const std::string& s : o.sets) {
    const auto [key, value] = parse_assignment(s);
    c.set(key, value);
  }
  c.validate();
  return c;
}

void prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "output path is not a directory: " + dir.string());
    if (!fs::is_empty(dir) && !force) {
      throw Error(ErrorKind::kIo, "output directory " + dir.string() + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

/// run.meta: resolved config, input digests and artifact digests. No
/// timestamps or absolute paths, so two identical runs write identical files.
class RunMeta {
 public:
  RunMeta(std::string command, const RunConfig& config) {
    add("command", std::move(command));
    for (const auto& [k, v] : config.entries()) add("config." + k, v);
  }
  void add(const std::string& key, const std::string& value) { lines_ += key + " = " + value + "\n"; }
  void artifact(const fs::path& file) { add("artifact." + file.filename().string(), sha256_file(file)); }
  void write(const fs::path& dir) const { write_text(dir / "run.meta", lines_); }

 private:
  std::string lines_;
};

std::vector<fs::path> ogsq_files(const fs::path& data) {
  if (!fs::is_directory(data)) return {data};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(data)) {
    if (e.is_regular_file() && e.path().extension() == ".ogsq") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::kIo, "no .ogsq files in " + data.string());
  return files;
}

std::vector<SequenceRecord> load_data(const fs::path& data, RunMeta& meta) {
  std::vector<SequenceRecord> records;
  std::string listing;
  for (const fs::path& f : ogsq_files(data)) {
    records.push_back(load_ogsq(f));
    listing += f.filename().string() + " " + sha256_file(f) + "\n";
  }
  meta.add("input.data_files", std::to_string(records.size()));
  meta.add("input.data_sha256", sha256_hex(listing));
  return records;
}

template <class Core>
RecurrentModel<Core> model_or_init(const std::string& ckpt, const RunConfig& c, RunMeta& meta, bool& untrained) {
  const std::string label = Core::kName == GruArrayCore::kName ? "kga" : "convgru";
  if (ckpt.empty()) {
    untrained = true;
    meta.add("input." + label, "fresh initialisation, seed " + std::to_string(c.init_seed));
    return RecurrentModel<Core>(RecurrentModel<Core>::init_params(c.init_seed));
  }
  RecurrentModel<Core> m = load_model<Core>(ckpt);
  untrained = m.params() == RecurrentModel<Core>::init_params(c.init_seed) ||
              m.params() == RecurrentModel<Core>::zero_params();
  meta.add("input." + label, sha256_file(ckpt));
  return m;
}

std::string init_note(std::uint64_t seed) {
  return "uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) per weight tensor, biases zero, mt19937_64 seed " +
         std::to_string(seed);
}

int cmd_generate(const Options& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  const fs::path dir = o.out;
  prepare_out(dir, o.force);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ogsq") fs::remove(e.path());
  }
  RunMeta meta("generate", c);
  const auto records = generate_dataset(c.world, c.noise, c.generate);
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::ostringstream name;
    name << "seq_" << std::setw(4) << std::setfill('0') << i << ".ogsq";
    save_ogsq(records[i], dir / name.str());
    meta.artifact(dir / name.str());
  }
  meta.write(dir);
  out << "wrote " << records.size() << " sequences of " << c.generate.n_frames << " frames (" << c.world.height << "x"
      << c.world.width << ", " << c.generate.fps << " fps) to " << dir.string() << "\n";
  return 0;
}

template <class Core>
TrainResult<Core> train_model(const RunConfig& c, std::span<const SequenceRecord> data, std::ostream& progress) {
  const RecurrentModel<Core> init(RecurrentModel<Core>::init_params(c.init_seed));
  return train(init, data, c.train, &progress);
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve(o);
  if (o.data.empty()) throw Error(ErrorKind::kConfig, "train needs --data");
  RunMeta meta("train", c);
  const auto records = load_data(o.data, meta);
  const fs::path dir = o.out;
  prepare_out(dir, o.force);
  meta.add("init", init_note(c.init_seed));

  TrainReport report;
  fs::path ckpt;
  if (c.model == "kga") {
    auto r = train_model<GruArrayCore>(c, records, err);
    ckpt = dir / "kga.ckpt";
    save_checkpoint(r.params, GruArrayCore::kMagic, ckpt);
    report = std::move(r.report);
  } else {
    auto r = train_model<ConvGruCore>(c, records, err);
    ckpt = dir / "convgru.ckpt";
    save_checkpoint(r.params, ConvGruCore::kMagic, ckpt);
    report = std::move(r.report);
  }
  write_text(dir / "train_report.csv", report.csv(true));
  write_text(dir / "train_history.csv", report.csv(false));
  meta.add("result.best_epoch", std::to_string(report.best_epoch));
  meta.add("result.stopping_epoch", std::to_string(report.stopping_epoch));
  meta.add("result.train_sequences", std::to_string(report.train_sequences));
  meta.add("result.validation_sequences", std::to_string(report.validation_sequences));
  meta.artifact(ckpt);
  meta.artifact(dir / "train_history.csv");
  meta.write(dir);
  out << report.csv(true) << "best epoch " << report.best_epoch << ", stopped after " << report.stopping_epoch
      << ", checkpoint " << ckpt.string() << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  RunMeta meta("eval", c);
  bool kga_fresh = false, cg_fresh = false;
  const KgaModel kga = model_or_init<GruArrayCore>(o.kga_ckpt, c, meta, kga_fresh);
  const ConvGruModel convgru = model_or_init<ConvGruCore>(o.convgru_ckpt, c, meta, cg_fresh);
  std::vector<SequenceRecord> records;
  if (!o.data.empty()) records = load_data(o.data, meta);
  const fs::path dir = o.out;
  prepare_out(dir, o.force);

  WorldConfig world = c.world;
  world.seed = c.eval.world_seed;
  NoiseConfig noise = c.noise;
  noise.seed = c.eval.noise_seed;
  const auto truth = simulate_truth(world, c.eval.n_sequences, c.eval.n_frames);
  const auto conditions = standard_conditions(noise);
  ConditionTable table = run_condition_table(kga, convgru, truth, world.height, world.width, conditions);
  table.kga_untrained = kga_fresh;
  table.convgru_untrained = cg_fresh;
  write_text(dir / "condition_table.csv", table.csv());
  write_text(dir / "condition_table.txt", table.summary());
  meta.add("result.truth_sha256", table.truth_sha256);
  meta.add("result.kga_untrained", kga_fresh ? "true" : "false");
  meta.add("result.convgru_untrained", cg_fresh ? "true" : "false");
  meta.artifact(dir / "condition_table.csv");
  out << table.summary();

  if (!records.empty()) {
    const BaselineScores base = naive_baselines(records);
    std::ostringstream csv;
    csv << std::setprecision(17) << "model,bce\n"
        << "KGA," << evaluate(kga, records) << "\nConvGRU," << evaluate(convgru, records) << "\ncopy-last,"
        << base.copy_last << "\nalways-free," << base.always_free << "\n";
    write_text(dir / "dataset_scores.csv", csv.str());
    meta.artifact(dir / "dataset_scores.csv");
    out << "\nscores on --data:\n" << csv.str();
  }
  meta.write(dir);
  return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  RunMeta meta("bench", c);
  bool kga_fresh = false, cg_fresh = false;
  const KgaModel kga = model_or_init<GruArrayCore>(o.kga_ckpt, c, meta, kga_fresh);
  const ConvGruModel convgru = model_or_init<ConvGruCore>(o.convgru_ckpt, c, meta, cg_fresh);
  const fs::path dir = o.out;
  prepare_out(dir, o.force);

  const std::vector<BenchResult> results{bench_latency(kga, c.bench), bench_latency(convgru, c.bench)};
  const HostInfo host = host_info();
  std::ostringstream text;
  text << "host cpu: " << host.cpu_model << "\nhardware threads: " << host.hardware_threads
       << "\ninference threads: " << host.eigen_threads << "\ncompiler: " << host.compiler << "\nextent: "
       << c.bench.height << "x" << c.bench.width << ", " << c.bench.frames << " timed frames after " << c.bench.warmup
       << " warmup\n\n"
       << bench_csv(results);
  text << std::fixed << std::setprecision(2) << "\nConvGRU/KGA median latency ratio: "
       << results[1].median_ms / results[0].median_ms << "\n";
  text << "reference figures from earlier work: KGA about 5 ms, ConvGRU about 18 ms per frame (different host); "
          "parameter counts 3906 and 30626\n";
  for (const BenchResult& r : results) {
    for (const std::string& w : r.warnings) text << "WARNING " << r.model << ": " << w << "\n";
  }
  write_text(dir / "bench.csv", bench_csv(results));
  write_text(dir / "bench.txt", text.str());
  meta.add("host.cpu", host.cpu_model);
  meta.add("host.threads", std::to_string(host.hardware_threads));
  meta.write(dir);
  out << text.str();
  return 0;
}

int cmd_export_viz(const Options& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  if (o.data.empty()) throw Error(ErrorKind::kConfig, "export-viz needs --data");
  RunMeta meta("export-viz", c);
  const auto files = ogsq_files(o.data);
  if (c.viz.sequence >= static_cast<Index>(files.size())) {
    throw Error(ErrorKind::kConfig, "viz.sequence " + std::to_string(c.viz.sequence) + " out of range, " +
                                        std::to_string(files.size()) + " sequence(s) available");
  }
  const fs::path source = files[static_cast<std::size_t>(c.viz.sequence)];
  SequenceRecord record = load_ogsq(source);
  meta.add("input.sequence", source.filename().string() + " " + sha256_file(source));
  if (c.viz.max_frames > 0 && static_cast<Index>(record.frames.size()) > c.viz.max_frames) {
    record.frames.resize(static_cast<std::size_t>(c.viz.max_frames));
  }
  if (record.frames.empty()) throw Error(ErrorKind::kInvalidArgument, "sequence has no frames");
  const fs::path dir = o.out;
  prepare_out(dir, o.force);

  std::size_t written = export_frames(record, dir).size();
  auto export_model = [&](const auto& model, const std::string& prefix) {
    std::vector<GridFrame> m;
    for (const FramePair& f : record.frames) m.push_back(f.measurement);
    const Rollout r = model.rollout(m, c.viz.hidden);
    written += export_frames(r.probs, dir, prefix + "prob").size();
    for (Index ch = 0; c.viz.hidden && ch < kHiddenChannels; ++ch) {
      std::vector<ProbFrame<double>> plane;
      for (const auto& step : r.hidden) plane.push_back(step[static_cast<std::size_t>(ch)]);
      std::ostringstream name;
      name << prefix << "hidden" << std::setw(2) << std::setfill('0') << ch;
      written += export_frames(plane, dir, name.str()).size();
    }
  };
  if (!o.kga_ckpt.empty()) {
    export_model(load_model<GruArrayCore>(o.kga_ckpt), "kga_");
    meta.add("input.kga", sha256_file(o.kga_ckpt));
  }
  if (!o.convgru_ckpt.empty()) {
    export_model(load_model<ConvGruCore>(o.convgru_ckpt), "convgru_");
    meta.add("input.convgru", sha256_file(o.convgru_ckpt));
  }
  meta.add("result.images", std::to_string(written));
  meta.write(dir);
  out << "wrote " << written << " images for " << record.frames.size() << " frames to " << dir.string() << "\n";
  return 0;
}

void add_common(CLI::App* cmd, Options& o, bool needs_out = true) {
  cmd->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override one key, key=value (repeatable)")->take_all();
  auto* out = cmd->add_option("--out", o.out, "output directory");
  if (needs_out) out->required();
  cmd->add_flag("--force", o.force, "write into a non-empty output directory");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Occupancy-grid prediction with a Kalman GRU array", "kga"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "simulate and corrupt a synthetic dataset");
  add_common(gen, o);
  auto* tr = app.add_subcommand("train", "train KGA or ConvGRU on a dataset");
  add_common(tr, o);
  tr->add_option("--data", o.data, "directory of .ogsq files or one file")->required();
  auto* ev = app.add_subcommand("eval", "score both models under each noise condition");
  add_common(ev, o);
  ev->add_option("--kga", o.kga_ckpt, "KGA checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--convgru", o.convgru_ckpt, "ConvGRU checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--data", o.data, "optional dataset to score as well");
  auto* be = app.add_subcommand("bench", "single-thread per-frame latency");
  add_common(be, o);
  be->add_option("--kga", o.kga_ckpt, "KGA checkpoint")->check(CLI::ExistingFile);
  be->add_option("--convgru", o.convgru_ckpt, "ConvGRU checkpoint")->check(CLI::ExistingFile);
  auto* viz = app.add_subcommand("export-viz", "write PGM images of a sequence and model states");
  add_common(viz, o);
  viz->add_option("--data", o.data, "directory of .ogsq files or one file")->required();
  viz->add_option("--kga", o.kga_ckpt, "KGA checkpoint")->check(CLI::ExistingFile);
  viz->add_option("--convgru", o.convgru_ckpt, "ConvGRU checkpoint")->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << Error(ErrorKind::kConfig, e.what()).one_line() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, out);
    if (tr->parsed()) return cmd_train(o, out, err);
    if (ev->parsed()) return cmd_eval(o, out);
    if (be->parsed()) return cmd_bench(o, out);
    if (viz->parsed()) return cmd_export_viz(o, out);
  } catch (const Error& e) {
    err << e.one_line() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << Error(ErrorKind::kIo, e.what()).one_line() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace kga
