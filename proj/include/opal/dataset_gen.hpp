#pragma once

#include <cstdint>

#include "opal/env.hpp"
#include "opal/maze.hpp"
#include "opal/trajectory.hpp"

namespace opal {

struct WaypointControllerConfig {
  double reach_radius = 0.3;        // resample the waypoint when this close
  std::size_t waypoint_timeout = 150;  // or after this many steps
  double deadband = 0.05;           // per-axis offset treated as zero
  // Steer at the next cell on a shortest grid path instead of straight at the
  // waypoint (which pins the ball against walls until the timeout).
  bool route_around_walls = false;
};

// Random point-to-point navigation traffic: one continuous log of n_steps
// transitions, cut into trajectories of traj_len (the last may be shorter).
// gt_reward is recorded with env's reward for oracle/evaluation use.
OfflineDataset gen_maze_dataset(const MazeEnv& env, std::size_t n_steps, std::uint64_t seed,
                                std::size_t traj_len = 200,
                                const WaypointControllerConfig& controller = {});

// Uniform-random actions from the environment's initial-state distribution.
OfflineDataset gen_random_dataset(const Environment& env, std::size_t n_traj, std::size_t traj_len,
                                  std::uint64_t seed);

// Waypoint traffic for mazes; ceil(n_steps / traj_len) uniform-random
// rollouts for everything else.
OfflineDataset gen_dataset(const Environment& env, std::size_t n_steps, std::uint64_t seed,
                           std::size_t traj_len = 200);

}  // namespace opal
