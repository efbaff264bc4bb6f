#include "opal/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace opal {

std::size_t OfflineDataset::transition_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.size();
  return n;
}

const Trajectory& OfflineDataset::find(const std::string& id) const {
  for (const auto& t : trajectories) {
    if (t.id == id) return t;
  }
  throw std::out_of_range("no trajectory with id '" + id + "'");
}

void validate(const Trajectory& traj, std::size_t state_dim, std::size_t action_count) {
  if (traj.transitions.empty()) {
    throw std::invalid_argument("trajectory '" + traj.id + "' is empty");
  }
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto& tr = traj.transitions[t];
    if (tr.state.size() != state_dim || tr.next_state.size() != state_dim) {
      throw std::invalid_argument("trajectory '" + traj.id + "' step " + std::to_string(t) +
                                  ": state dimension mismatch");
    }
    if (tr.action < 0 || static_cast<std::size_t>(tr.action) >= action_count) {
      throw std::invalid_argument("trajectory '" + traj.id + "' step " + std::to_string(t) +
                                  ": action out of range");
    }
    if (t + 1 < traj.size() && tr.next_state != traj.transitions[t + 1].state) {
      throw std::invalid_argument("trajectory '" + traj.id + "' step " + std::to_string(t) +
                                  ": next_state does not chain");
    }
  }
}

void validate(const OfflineDataset& dataset) {
  for (const auto& t : dataset.trajectories) validate(t, dataset.state_dim, dataset.action_count);
}

RewardFreeDataset::RewardFreeDataset(const OfflineDataset& dataset) : data_(dataset) {
  for (auto& traj : data_.trajectories) {
    for (auto& tr : traj.transitions) tr.gt_reward.reset();
  }
}

Snippet make_snippet(const Trajectory& traj, std::size_t start, std::size_t length) {
  if (length == 0) throw std::invalid_argument("snippet length must be >= 1");
  if (start + length > traj.size()) {
    throw std::invalid_argument("snippet [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") exceeds trajectory '" +
                                traj.id + "'");
  }
  Snippet s;
  s.source_id = traj.id;
  s.start = start;
  s.length = length;
  s.transitions.assign(traj.transitions.begin() + static_cast<std::ptrdiff_t>(start),
                       traj.transitions.begin() + static_cast<std::ptrdiff_t>(start + length));
  return s;
}

double discounted_return(const Trajectory& traj, double gamma, std::span<const double> rewards) {
  if (rewards.size() != traj.size()) {
    throw std::invalid_argument("reward count " + std::to_string(rewards.size()) +
                                " does not match trajectory length " + std::to_string(traj.size()));
  }
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

double snippet_return(const Snippet& snippet, const StateRewardFn& reward_fn) {
  double total = 0.0;
  for (const auto& tr : snippet.transitions) total += reward_fn(tr.state);
  return total;
}

}  // namespace opal
