#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "opal/rng.hpp"
#include "opal/trajectory.hpp"

namespace opal {

// Common surface over the maze and cart-pole simulators. Used only by data
// generation, the oracle labeler and policy evaluation.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::size_t horizon() const = 0;

  virtual State initial_state(Rng& rng) const = 0;
  virtual State step(std::span<const double> state, int action) const = 0;
  virtual double reward(std::span<const double> state, std::span<const double> next_state) const = 0;

  // The two coordinates drawn for a state: (x, y) for mazes, (x, theta) for cart-pole.
  virtual std::array<double, 2> display_point(std::span<const double> state) const = 0;
  virtual std::vector<std::string> layout_rows() const { return {}; }
};

// Total number of simulator transitions computed by this process. Only ever
// increases; tests snapshot it to prove a stage never touched a simulator.
std::uint64_t env_step_count();
void record_env_step();

// Registered names: umaze-mini, medium-mini, medium-mini-constrained, open,
// open-orbit, cartpole-balance, cartpole-cw-windmill, cartpole-ccw-windmill.
std::unique_ptr<Environment> make_environment(const std::string& name);
std::vector<std::string> environment_names();

}  // namespace opal
