#pragma once

// Boids reduced to the separation rule: constant-speed agents that steer
// away from close neighbours with a bounded turn rate, inside a reflecting box.

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "kga/grid.hpp"

namespace kga {

struct Agent {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();  // (x, y), cells
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // cells per frame
  double radius = 2.0;

  friend bool operator==(const Agent&, const Agent&) = default;
};

struct WorldConfig {
  Index width = 50;
  Index height = 50;
  Index n_agents = 10;
  double radius = 2.0;
  double separation_radius = 6.0;
  double separation_gain = 4.0;
  double max_turn = 0.3;  // radians per frame
  double speed = 0.5;     // cells per frame
  std::uint64_t seed = 1;

  void validate() const;
};

/// Uniform non-overlapping placement, uniform headings, speed = config.speed.
std::vector<Agent> init_world(const WorldConfig& config);

/// One synchronous separation-only update of every agent.
std::vector<Agent> avoidance_step(std::span<const Agent> agents, const WorldConfig& config);

ObjectSet to_objects(std::span<const Agent> agents);

/// Object sets for frames 0..n_frames-1; frame 0 is the initial placement.
std::vector<ObjectSet> simulate(const WorldConfig& config, Index n_frames);

}  // namespace kga
