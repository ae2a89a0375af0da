#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "kga/boids.hpp"
#include "kga/grid.hpp"
#include "kga/noise.hpp"

using namespace kga;

namespace {

double min_pairwise_distance(const std::vector<ObjectSet>& frames) {
  double best = INFINITY;
  for (const ObjectSet& f : frames) {
    for (std::size_t a = 0; a < f.size(); ++a) {
      for (std::size_t b = a + 1; b < f.size(); ++b) best = std::min(best, std::hypot(f[a].x - f[b].x, f[a].y - f[b].y));
    }
  }
  return best;
}

ObjectSet grid_of_objects(int n, double spacing = 4.0) {
  ObjectSet objs;
  for (int k = 0; k < n; ++k) objs.push_back({10.0 + spacing * (k % 8), 10.0 + spacing * (k / 8), 2.0, k});
  return objs;
}

}  // namespace

TEST_CASE("world config validation") {
  WorldConfig c;
  c.n_agents = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = WorldConfig{};
  c.width = 7;
  CHECK_THROWS_AS(c.validate(), Error);
  c = WorldConfig{};
  c.separation_radius = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(WorldConfig{}.validate());
}

TEST_CASE("init_world: determinism, speed and an impossible placement") {
  const WorldConfig c;
  CHECK(init_world(c) == init_world(c));
  for (const Agent& a : init_world(c)) CHECK(a.velocity.norm() == doctest::Approx(c.speed).epsilon(1e-12));

  WorldConfig crowded;
  crowded.width = crowded.height = 8;
  crowded.n_agents = 40;
  crowded.speed = 0.5;
  CHECK_THROWS_AS(init_world(crowded), Error);

  WorldConfig one;
  one.n_agents = 1;
  const auto agents = init_world(one);
  REQUIRE(agents.size() == 1);
  CHECK(agents[0].velocity.norm() == doctest::Approx(one.speed).epsilon(1e-12));
}

TEST_CASE("simulate is a pure function of the config") {
  WorldConfig c;
  c.seed = 11;
  CHECK(simulate(c, 60) == simulate(c, 60));
  WorldConfig other = c;
  other.seed = 12;
  CHECK(simulate(c, 60) != simulate(other, 60));
}

TEST_CASE("a lone agent moves in a straight line") {
  WorldConfig c;
  const std::vector<Agent> start{{{25.0, 25.0}, {0.3, 0.4}, 2.0}};
  std::vector<Agent> agents = start;
  for (int t = 1; t <= 20; ++t) {
    agents = avoidance_step(agents, c);
    CHECK(agents[0].velocity == start[0].velocity);
    CHECK((agents[0].position - (start[0].position + t * start[0].velocity)).norm() < 1e-12);
  }
}

TEST_CASE("head-on pair turns away symmetrically") {
  WorldConfig c;
  const std::vector<Agent> start{{{23.0, 25.0}, {0.5, 0.0}, 2.0}, {{27.0, 25.0}, {-0.5, 0.0}, 2.0}};
  const auto next = avoidance_step(start, c);
  const double heading_a = std::atan2(next[0].velocity.y(), next[0].velocity.x());
  const double heading_b = std::atan2(next[1].velocity.y(), next[1].velocity.x());
  CHECK(std::abs(heading_a) == doctest::Approx(c.max_turn).epsilon(1e-12));
  // Point symmetry about the midpoint: b's velocity is a's negated.
  CHECK((next[0].velocity + next[1].velocity).norm() < 1e-12);
  CHECK((next[0].position + next[1].position - Eigen::Vector2d(50.0, 50.0)).norm() < 1e-12);
  // Lateral motion in opposite directions.
  CHECK(next[0].velocity.y() * next[1].velocity.y() < 0.0);
  CHECK(std::abs(heading_b - heading_a) == doctest::Approx(std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("coincident agents separate without non-finite values") {
  WorldConfig c;
  const std::vector<Agent> start{{{25.0, 25.0}, {0.5, 0.0}, 2.0}, {{25.0, 25.0}, {0.5, 0.0}, 2.0}};
  const auto next = avoidance_step(start, c);
  for (const Agent& a : next) {
    CHECK(a.position.allFinite());
    CHECK(a.velocity.norm() == doctest::Approx(c.speed).epsilon(1e-12));
  }
  CHECK(next[0].velocity != next[1].velocity);
  CHECK(avoidance_step(start, c) == next);
}

TEST_CASE("separation increases the minimum pairwise distance") {
  WorldConfig with;
  with.seed = 5;
  WorldConfig without = with;
  without.separation_gain = 0.0;
  const double d_with = min_pairwise_distance(simulate(with, 300));
  const double d_without = min_pairwise_distance(simulate(without, 300));
  MESSAGE("min distance with avoidance " << d_with << ", without " << d_without);
  CHECK(d_with > d_without);
}

TEST_CASE("speed is conserved and agents stay inside over 10^4 steps") {
  WorldConfig c;
  c.seed = 21;
  std::vector<Agent> agents = init_world(c);
  bool speed_ok = true, inside = true;
  for (int t = 0; t < 10000; ++t) {
    agents = avoidance_step(agents, c);
    for (const Agent& a : agents) {
      speed_ok = speed_ok && std::abs(a.velocity.norm() - c.speed) <= 1e-9;
      inside = inside && a.position.x() >= 0.0 && a.position.x() < static_cast<double>(c.width) &&
               a.position.y() >= 0.0 && a.position.y() < static_cast<double>(c.height);
    }
  }
  CHECK(speed_ok);
  CHECK(inside);
}

TEST_CASE("rasterize") {
  CHECK((rasterize({}, 6, 7).array() == 0).all());

  const ObjectSet one{{10.5, 12.5, 2.0, 0}};
  const GridFrame f = rasterize(one, 30, 30);
  CHECK(f.cast<int>().sum() == 13);
  // Hand enumeration of the 5×5 neighbourhood: offsets with di² + dj² <= 4.
  for (int di = -3; di <= 3; ++di) {
    for (int dj = -3; dj <= 3; ++dj) {
      CHECK(f(12 + di, 10 + dj) == (di * di + dj * dj <= 4 ? 1 : 0));
    }
  }

  ObjectSet many = grid_of_objects(12, 3.3);
  const GridFrame ref = rasterize(many, 40, 40);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(many.begin(), many.end(), rng);
    CHECK(rasterize(many, 40, 40) == ref);
  }
  CHECK(is_binary(ref));

  const ObjectSet edge{{0.2, 0.2, 3.0, 0}};
  CHECK(rasterize(edge, 10, 10)(0, 0) == 1);
}

TEST_CASE("noise config validation") {
  NoiseConfig n;
  n.miss_rate = 1.5;
  CHECK_THROWS_AS(n.validate(), Error);
  n = NoiseConfig{};
  n.max_shift = 0;
  CHECK_THROWS_AS(n.validate(), Error);
}

TEST_CASE("miss noise") {
  const ObjectSet objs = grid_of_objects(10);
  NoiseConfig n;
  n.miss_rate = 0.0;
  CHECK(apply_miss(objs, n, 3) == objs);
  n.miss_rate = 1.0;
  for (std::uint64_t t = 0; t < 50; ++t) CHECK(apply_miss(objs, n, t).empty());

  n.miss_rate = 0.8;
  const int frames = 10000;
  std::size_t survived = 0;
  for (int t = 0; t < frames; ++t) {
    const ObjectSet kept = apply_miss(objs, n, static_cast<std::uint64_t>(t));
    survived += kept.size();
    for (const Object& o : kept) CHECK_MESSAGE(o == objs[static_cast<std::size_t>(o.id)], "survivor changed");
  }
  const double trials = 10.0 * frames;
  const double rate = static_cast<double>(survived) / trials;
  const double se = std::sqrt(0.2 * 0.8 / trials);
  MESSAGE("survival " << rate << " (se " << se << ")");
  CHECK(std::abs(rate - 0.2) <= 3.0 * se);
}

TEST_CASE("shift noise") {
  const ObjectSet objs = grid_of_objects(10);
  NoiseConfig n;
  n.shift_rate = 0.0;
  CHECK(apply_shift(objs, n, 4, 50, 50) == objs);

  n.shift_rate = 1.0;
  std::map<std::pair<int, int>, int> counts;
  const int frames = 10000;
  for (int t = 0; t < frames; ++t) {
    const ObjectSet moved = apply_shift(objs, n, static_cast<std::uint64_t>(t), 50, 50);
    REQUIRE(moved.size() == objs.size());
    for (std::size_t k = 0; k < objs.size(); ++k) {
      const double dx = moved[k].x - objs[k].x, dy = moved[k].y - objs[k].y;
      CHECK(dx == std::round(dx));
      CHECK(dy == std::round(dy));
      const int ix = static_cast<int>(dx), iy = static_cast<int>(dy);
      CHECK(std::max(std::abs(ix), std::abs(iy)) <= 2);
      CHECK(std::max(std::abs(ix), std::abs(iy)) >= 1);
      ++counts[{ix, iy}];
    }
  }
  CHECK(counts.size() == 24);
  const double draws = 10.0 * frames, p = 1.0 / 24.0;
  const double se = std::sqrt(p * (1.0 - p) / draws);
  for (const auto& [offset, c] : counts) {
    CHECK_MESSAGE(std::abs(c / draws - p) <= 3.0 * se, "offset " << offset.first << "," << offset.second);
  }

  // Clamping at the world edge.
  const ObjectSet corner{{0.1, 49.9, 2.0, 0}};
  for (std::uint64_t t = 0; t < 200; ++t) {
    const Object o = apply_shift(corner, n, t, 50, 50)[0];
    CHECK(o.x >= 0.0);
    CHECK(o.x < 50.0);
    CHECK(o.y >= 0.0);
    CHECK(o.y < 50.0);
  }
}

TEST_CASE("corrupt_frame") {
  WorldConfig w;
  const auto frames = simulate(w, 1000);
  NoiseConfig n;
  n.miss_rate = 0.0;
  n.shift_rate = 0.0;
  for (std::size_t t = 0; t < 20; ++t) {
    const CorruptedFrame c = corrupt_frame(frames[t], n, t, 50, 50);
    CHECK(c.measurement == c.truth);
    CHECK(c.truth == rasterize(frames[t], 50, 50));
  }

  n.miss_rate = 1.0;
  for (std::size_t t = 0; t < 20; ++t) {
    const CorruptedFrame c = corrupt_frame(frames[t], n, t, 50, 50);
    CHECK((c.measurement.array() == 0).all());
    CHECK(c.truth == rasterize(frames[t], 50, 50));
  }

  n = NoiseConfig{};
  double measured = 0.0, truth = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const CorruptedFrame c = corrupt_frame(frames[t], n, t, 50, 50);
    measured += c.measurement.cast<double>().sum();
    truth += c.truth.cast<double>().sum();
    // Miss before shift: measurement is the rasterization of shifted survivors.
    CHECK(c.measurement == rasterize(apply_shift(apply_miss(frames[t], n, t), n, t, 50, 50), 50, 50));
  }
  CHECK(measured <= truth);

  // Frame corruption does not depend on processing order.
  std::vector<GridFrame> forward, backward(100);
  for (std::size_t t = 0; t < 100; ++t) forward.push_back(corrupt_frame(frames[t], n, t, 50, 50).measurement);
  for (std::size_t t = 100; t-- > 0;) backward[t] = corrupt_frame(frames[t], n, t, 50, 50).measurement;
  CHECK(forward == backward);

  NoiseConfig reseeded = n;
  reseeded.seed = 99;
  int differing = 0;
  for (std::size_t t = 0; t < 100; ++t) differing += corrupt_frame(frames[t], reseeded, t, 50, 50).measurement != forward[t];
  CHECK(differing > 0);
}
