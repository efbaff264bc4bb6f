#include "opal/cartpole.hpp"

#include <cmath>
#include <stdexcept>

namespace opal {

CartPoleState CartPoleState::from_vector(std::span<const double> s) {
  if (s.size() != 4) throw std::invalid_argument("cart-pole state must have 4 entries");
  return {s[0], s[1], s[2], s[3]};
}

double cartpole_action_force(int action, const CartPoleParams& params) {
  switch (action) {
    case 0: return 0.0;
    case 1: return -params.force;
    case 2: return params.force;
    default:
      throw std::invalid_argument("cart-pole action " + std::to_string(action) + " out of range");
  }
}

int cartpole_mirror_action(int action) {
  switch (action) {
    case 0: return 0;
    case 1: return 2;
    case 2: return 1;
    default:
      throw std::invalid_argument("cart-pole action " + std::to_string(action) + " out of range");
  }
}

CartPoleState cartpole_step(const CartPoleState& s, int action, const CartPoleParams& p) {
  const double force = cartpole_action_force(action, p);
  record_env_step();
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pole_mass_length = p.pole_mass * p.half_length;
  const double cos_t = std::cos(s.theta);
  const double sin_t = std::sin(s.theta);

  const double temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (p.gravity * sin_t - cos_t * temp) /
      (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

  CartPoleState n;
  n.x = s.x + p.dt * s.x_dot;
  n.x_dot = s.x_dot + p.dt * x_acc;
  n.theta = s.theta + p.dt * s.theta_dot;
  n.theta_dot = s.theta_dot + p.dt * theta_acc;
  return n;
}

double cartpole_gt_reward(const CartPoleState& s, CartPoleTask task, double position_penalty) {
  const double cart = position_penalty * std::abs(s.x);
  switch (task) {
    case CartPoleTask::BALANCE: return std::cos(s.theta) - cart;
    case CartPoleTask::CW_WINDMILL: return -s.theta_dot - cart;
    case CartPoleTask::CCW_WINDMILL: return s.theta_dot - cart;
  }
  return 0.0;
}

CartPoleEnv::CartPoleEnv(std::string name, CartPoleTask task, CartPoleParams params,
                         std::size_t horizon)
    : name_(std::move(name)), task_(task), params_(params), horizon_(horizon) {}

State CartPoleEnv::initial_state(Rng& rng) const {
  State s(4);
  for (auto& v : s) v = uniform_real(rng, -0.05, 0.05);
  return s;
}

State CartPoleEnv::step(std::span<const double> state, int action) const {
  return cartpole_step(CartPoleState::from_vector(state), action, params_).to_vector();
}

double CartPoleEnv::reward(std::span<const double> state, std::span<const double>) const {
  return cartpole_gt_reward(CartPoleState::from_vector(state), task_);
}

}  // namespace opal
