#include <doctest.h>

#include <fstream>
#include <set>

#include "kga/config.hpp"
#include "kga/evaluation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kga;

namespace {

WorldConfig small_world(std::uint64_t seed = 5) {
  WorldConfig w;
  w.width = w.height = 20;
  w.n_agents = 4;
  w.seed = seed;
  return w;
}

}  // namespace

TEST_CASE("config keys round trip through text") {
  RunConfig c;
  c.set("world.n_agents", "12");
  c.set("noise.miss_rate", " 0.25 ");
  c.set("train.model", "convgru");
  c.set("viz.hidden", "false");
  CHECK(c.world.n_agents == 12);
  CHECK(c.noise.miss_rate == 0.25);
  CHECK(c.model == "convgru");
  CHECK(!c.viz.hidden);

  test::TempDir dir("config");
  std::ofstream(dir / "run.cfg") << "# comment\n\n" << c.to_text();
  const RunConfig back = load_config(dir / "run.cfg");
  CHECK(back.entries() == c.entries());

  const auto entries = c.entries();
  CHECK(std::is_sorted(entries.begin(), entries.end()));
  CHECK(entries.size() == 40);
}

TEST_CASE("config errors carry the key and line") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(c.set("world.nope", "1"), doctest::Contains("world.nope"), Error);
  CHECK_THROWS_WITH_AS(c.set("world.width", "12x"), doctest::Contains("expected a number"), Error);
  CHECK_THROWS_AS(c.set("world.width", ""), Error);
  CHECK_THROWS_AS(c.set("generate.fps", "70000"), Error);
  CHECK_THROWS_AS(c.set("viz.hidden", "yes"), Error);

  try {
    parse_config_text("world.width = 10\n# fine\nnot an assignment\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(e.offset() == 3u);
  }

  test::TempDir dir("config_err");
  std::ofstream(dir / "bad.cfg") << "world.width = 10\nworld.height = ten\n";
  try {
    load_config(dir / "bad.cfg");
    FAIL("expected a value error");
  } catch (const Error& e) {
    CHECK(e.offset() == 2u);
    CHECK(std::string(e.what()).find("bad.cfg") != std::string::npos);
  }

  CHECK(parse_assignment("a.b = c=d") == std::pair<std::string, std::string>{"a.b", "c=d"});
  CHECK_THROWS_AS(parse_assignment("novalue"), Error);
  CHECK_THROWS_AS(parse_assignment("=3"), Error);

  RunConfig bad;
  bad.model = "lstm";
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("generated datasets are reproducible and per-sequence distinct") {
  NoiseConfig noise;
  GenerateConfig g;
  g.n_sequences = 3;
  g.n_frames = 15;
  const auto a = generate_dataset(small_world(), noise, g);
  const auto b = generate_dataset(small_world(), noise, g);
  REQUIRE(a.size() == 3);
  CHECK(a == b);
  CHECK(!(a[0].frames == a[1].frames));
  for (const SequenceRecord& r : a) {
    CHECK(r.height == 20);
    CHECK(r.frames.size() == 15);
    CHECK_NOTHROW(r.validate());
  }
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 50; ++i) seeds.insert(world_for_sequence(small_world(), i).seed);
  CHECK(seeds.size() == 50);
  CHECK(noise_for_sequence(noise, 0).seed != noise_for_sequence(noise, 1).seed);

  g.n_frames = 1;
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("zero noise leaves measurements equal to truth") {
  NoiseConfig clean;
  clean.miss_rate = 0.0;
  clean.shift_rate = 0.0;
  const auto truth = simulate_truth(small_world(), 2, 12);
  for (const auto& seq : truth) {
    const SequenceRecord r = corrupt_sequence(seq, clean, 20, 20);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      CHECK(r.frames[t].measurement == r.frames[t].truth);
      CHECK(r.frames[t].truth == rasterize(seq[t], 20, 20));
    }
  }
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  test::TempDir dir("sha");
  std::ofstream(dir / "f", std::ios::binary) << "abc";
  CHECK(sha256_file(dir / "f") == sha256_hex("abc"));
}

TEST_CASE("naive baselines against the flat oracle") {
  const auto truth = simulate_truth(small_world(), 2, 10);
  NoiseConfig noise;
  std::vector<SequenceRecord> data;
  for (std::size_t i = 0; i < truth.size(); ++i) data.push_back(corrupt_sequence(truth[i], noise_for_sequence(noise, i), 20, 20));
  const BaselineScores s = naive_baselines(data);

  double copy = 0.0, free = 0.0;
  int pairs = 0;
  for (const SequenceRecord& r : data) {
    for (std::size_t t = 0; t + 1 < r.frames.size(); ++t) {
      oracle::Flat pc, pf, y;
      for (Index k = 0; k < r.frames[t].measurement.size(); ++k) {
        const double m = r.frames[t].measurement.data()[k];
        pc.push_back(std::clamp(m, kProbEpsilon, 1.0 - kProbEpsilon));
        pf.push_back(kProbEpsilon);
        y.push_back(r.frames[t + 1].truth.data()[k]);
      }
      copy += oracle::bce(pc, y);
      free += oracle::bce(pf, y);
      ++pairs;
    }
  }
  CHECK(test::relative_error(s.copy_last, copy / pairs) <= 1e-12);
  CHECK(test::relative_error(s.always_free, free / pairs) <= 1e-12);
}

TEST_CASE("condition table shares truth across conditions") {
  const auto truth = simulate_truth(small_world(), 2, 8);
  NoiseConfig base;
  const auto conditions = standard_conditions(base);
  REQUIRE(conditions.size() == 4);
  CHECK(conditions[0].noise.miss_rate == 0.8);
  CHECK(conditions[0].noise.shift_rate == 0.0);
  CHECK(conditions[1].noise.miss_rate == 0.0);
  CHECK(conditions[1].noise.shift_rate == 0.1);
  CHECK(conditions[2].noise.miss_rate == 0.8);
  CHECK(conditions[2].noise.shift_rate == 0.1);
  CHECK(conditions[0].reference_kga == 0.3306);
  CHECK(conditions[2].reference_convgru == 0.3312);

  const KgaModel kga(KgaModel::init_params(1));
  const ConvGruModel convgru(ConvGruModel::init_params(1));
  const ConditionTable table = run_condition_table(kga, convgru, truth, 20, 20, conditions);
  CHECK(table.rows.size() == 16);
  CHECK(table.truth_sha256.size() == 64);
  for (const ConditionResult& r : table.rows) {
    CHECK(r.n_frames == 14);
    CHECK(std::isfinite(r.bce));
  }
  // The noiseless row must match a direct evaluation of clean records.
  std::vector<SequenceRecord> clean;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    clean.push_back(corrupt_sequence(truth[i], noise_for_sequence(conditions[3].noise, i), 20, 20));
  }
  CHECK(table.rows[12].model == "KGA");
  CHECK(table.rows[12].bce == evaluate(kga, std::span<const SequenceRecord>(clean)));
  CHECK(table.csv().rfind("condition,model,bce,n_frames,reference_bce\n", 0) == 0);

  std::vector<std::vector<ObjectSet>> empty;
  CHECK_THROWS_AS(run_condition_table(kga, convgru, empty, 20, 20, conditions), Error);
}

TEST_CASE("bench reports parameter counts and percentiles") {
  BenchConfig c;
  c.frames = 20;
  c.warmup = 2;
  c.height = c.width = 16;
  const BenchResult r = bench_latency(KgaModel(KgaModel::init_params(1)), c);
  CHECK(r.param_count == 3906);
  CHECK(r.frames == 20);
  CHECK(r.median_ms > 0.0);
  CHECK(r.p95_ms >= r.median_ms);
  CHECK(!r.warnings.empty());  // fewer than 1000 frames

  c.single_precision = true;
  const BenchResult f = bench_latency(ConvGruModel(ConvGruModel::init_params(1)), c);
  CHECK(f.param_count == 16194);
  const std::vector<BenchResult> both{r, f};
  const std::string csv = bench_csv(both);
  CHECK(csv.find("KGA,") != std::string::npos);
  CHECK(csv.find(",16194,20,f32") != std::string::npos);

  c.frames = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}
