#include "kga/boids.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "kga/rng.hpp"

namespace kga {

namespace {

constexpr std::uint64_t kCoincidentStream = 0x636f696e63696465ULL;

/// Wrap into (-pi, pi].
double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

}  // namespace

void WorldConfig::validate() const {
  if (width < 8 || height < 8) {
    throw Error(ErrorKind::kConfig, "world must be at least 8x8 cells");
  }
  if (n_agents < 1) throw Error(ErrorKind::kConfig, "world.n_agents must be >= 1");
  if (!(separation_radius > 0.0)) throw Error(ErrorKind::kConfig, "world.separation_radius must be > 0");
  if (!(radius > 0.0)) throw Error(ErrorKind::kConfig, "world.radius must be > 0");
  if (!(max_turn >= 0.0)) throw Error(ErrorKind::kConfig, "world.max_turn must be >= 0");
  if (!(speed > 0.0) || !(2.0 * speed < static_cast<double>(std::min(width, height)))) {
    throw Error(ErrorKind::kConfig, "world.speed must be in (0, min(width, height)/2)");
  }
}

std::vector<Agent> init_world(const WorldConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(config.width));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(config.height));
  std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);

  const std::uint64_t max_rejections = 10 * static_cast<std::uint64_t>(config.n_agents * config.n_agents);
  const double min_dist = 2.0 * config.radius;
  std::uint64_t rejections = 0;
  std::vector<Agent> agents;
  agents.reserve(static_cast<std::size_t>(config.n_agents));
  while (static_cast<Index>(agents.size()) < config.n_agents) {
    Eigen::Vector2d p(ux(rng), uy(rng));
    bool overlaps = false;
    for (const Agent& other : agents) {
      if ((other.position - p).norm() < min_dist) {
        overlaps = true;
        break;
      }
    }
    if (overlaps) {
      if (++rejections > max_rejections) {
        throw Error(ErrorKind::kInvalidArgument,
                    "cannot place " + std::to_string(config.n_agents) + " agents without overlap");
      }
      continue;
    }
    const double theta = heading(rng);
    agents.push_back(Agent{p, config.speed * Eigen::Vector2d(std::cos(theta), std::sin(theta)), config.radius});
  }
  return agents;
}

std::vector<Agent> avoidance_step(std::span<const Agent> agents, const WorldConfig& config) {
  const double r_sep2 = config.separation_radius * config.separation_radius;
  const double w = static_cast<double>(config.width);
  const double h = static_cast<double>(config.height);
  std::vector<Agent> next(agents.begin(), agents.end());

  for (std::size_t i = 0; i < agents.size(); ++i) {
    const Agent& self = agents[i];
    Eigen::Vector2d separation = Eigen::Vector2d::Zero();
    for (std::size_t j = 0; j < agents.size(); ++j) {
      if (j == i) continue;
      const Eigen::Vector2d d = self.position - agents[j].position;
      const double dist2 = d.squaredNorm();
      if (dist2 == 0.0) {
        // Same direction for the pair, opposite signs.
        SplitMix64 pair_rng(stream_seed({config.seed, kCoincidentStream, std::min(i, j), std::max(i, j)}));
        const double angle = 2.0 * std::numbers::pi * pair_rng.uniform();
        const double sign = i < j ? 1.0 : -1.0;
        separation += sign * Eigen::Vector2d(std::cos(angle), std::sin(angle));
      } else if (dist2 < r_sep2) {
        separation += d / dist2;
      }
    }

    double theta = std::atan2(self.velocity.y(), self.velocity.x());
    const Eigen::Vector2d desired = self.velocity + config.separation_gain * separation;
    if (desired.squaredNorm() > 0.0) {
      const double turn = wrap_angle(std::atan2(desired.y(), desired.x()) - theta);
      theta += std::clamp(turn, -config.max_turn, config.max_turn);
    }
    Eigen::Vector2d v = config.speed * Eigen::Vector2d(std::cos(theta), std::sin(theta));

    const Eigen::Vector2d ahead = self.position + v;
    if (ahead.x() < 0.0 || ahead.x() >= w) v.x() = -v.x();
    if (ahead.y() < 0.0 || ahead.y() >= h) v.y() = -v.y();
    next[i].velocity = v;
    next[i].position = self.position + v;
  }
  return next;
}

ObjectSet to_objects(std::span<const Agent> agents) {
  ObjectSet objects;
  objects.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    objects.push_back(Object{agents[i].position.x(), agents[i].position.y(), agents[i].radius,
                             static_cast<std::int64_t>(i)});
  }
  return objects;
}

std::vector<ObjectSet> simulate(const WorldConfig& config, Index n_frames) {
  std::vector<ObjectSet> frames;
  frames.reserve(static_cast<std::size_t>(std::max<Index>(n_frames, 0)));
  std::vector<Agent> agents = init_world(config);
  for (Index t = 0; t < n_frames; ++t) {
    if (t > 0) agents = avoidance_step(agents, config);
    frames.push_back(to_objects(agents));
  }
  return frames;
}

}  // namespace kga
