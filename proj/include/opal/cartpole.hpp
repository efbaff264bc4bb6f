#pragma once

#include <span>
#include <string>

#include "opal/env.hpp"

namespace opal {

struct CartPoleState {
  double x = 0, x_dot = 0;
  double theta = 0;  // unwrapped; positive theta_dot is counterclockwise
  double theta_dot = 0;

  State to_vector() const { return {x, x_dot, theta, theta_dot}; }
  static CartPoleState from_vector(std::span<const double> s);
  bool operator==(const CartPoleState&) const = default;
};

struct CartPoleParams {
  double dt = 0.02;
  double force = 10.0;
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
};

inline constexpr int kCartPoleActionCount = 3;

// Action 0 applies no force, 1 pushes left (-F), 2 pushes right (+F).
double cartpole_action_force(int action, const CartPoleParams& params = {});
int cartpole_mirror_action(int action);

// Explicit Euler step of the classic cart-pole equations. No termination and
// no angle wrapping: the pole may swing below the track.
CartPoleState cartpole_step(const CartPoleState& s, int action, const CartPoleParams& params = {});

enum class CartPoleTask { BALANCE, CW_WINDMILL, CCW_WINDMILL };

inline constexpr double kCartPositionPenalty = 0.1;

double cartpole_gt_reward(const CartPoleState& s, CartPoleTask task,
                          double position_penalty = kCartPositionPenalty);

class CartPoleEnv final : public Environment {
 public:
  CartPoleEnv(std::string name, CartPoleTask task, CartPoleParams params = {},
              std::size_t horizon = 200);

  const std::string& name() const override { return name_; }
  std::size_t state_dim() const override { return 4; }
  std::size_t action_count() const override { return kCartPoleActionCount; }
  std::size_t horizon() const override { return horizon_; }

  // Every coordinate uniform in [-0.05, 0.05].
  State initial_state(Rng& rng) const override;
  State step(std::span<const double> state, int action) const override;
  double reward(std::span<const double> state, std::span<const double> next_state) const override;
  std::array<double, 2> display_point(std::span<const double> state) const override {
    return {state[0], state[2]};
  }

  CartPoleTask task() const { return task_; }

 private:
  std::string name_;
  CartPoleTask task_;
  CartPoleParams params_;
  std::size_t horizon_;
};

}  // namespace opal
