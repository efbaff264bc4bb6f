#include "opal/env.hpp"

#include <atomic>
#include <stdexcept>

#include "opal/cartpole.hpp"
#include "opal/maze.hpp"

namespace opal {

namespace {
std::atomic<std::uint64_t> g_step_count{0};
}  // namespace

std::uint64_t env_step_count() { return g_step_count.load(std::memory_order_relaxed); }

void record_env_step() { g_step_count.fetch_add(1, std::memory_order_relaxed); }

std::vector<std::string> environment_names() {
  return {"umaze-mini",       "medium-mini",          "medium-mini-constrained",
          "open",             "open-orbit",           "cartpole-balance",
          "cartpole-cw-windmill", "cartpole-ccw-windmill"};
}

std::unique_ptr<Environment> make_environment(const std::string& name) {
  if (name == "umaze-mini") {
    auto layout = builtin_layout("umaze-mini");
    const auto goal = layout.cell_center(1, 1);
    return std::make_unique<MazeEnv>(name, std::move(layout), MazeTask::GOAL, goal);
  }
  if (name == "medium-mini" || name == "medium-mini-constrained") {
    auto layout = builtin_layout("medium-mini");
    const auto goal = layout.cell_center(1, 6);
    const auto task = name == "medium-mini" ? MazeTask::GOAL : MazeTask::CONSTRAINED_GOAL;
    return std::make_unique<MazeEnv>(name, std::move(layout), task, goal);
  }
  if (name == "open" || name == "open-orbit") {
    auto layout = builtin_layout("open");
    const auto goal = layout.cell_center(1, 1);
    const auto task = name == "open" ? MazeTask::GOAL : MazeTask::ORBIT;
    return std::make_unique<MazeEnv>(name, std::move(layout), task, goal);
  }
  if (name == "cartpole-balance") {
    return std::make_unique<CartPoleEnv>(name, CartPoleTask::BALANCE);
  }
  if (name == "cartpole-cw-windmill") {
    return std::make_unique<CartPoleEnv>(name, CartPoleTask::CW_WINDMILL);
  }
  if (name == "cartpole-ccw-windmill") {
    return std::make_unique<CartPoleEnv>(name, CartPoleTask::CCW_WINDMILL);
  }
  throw std::invalid_argument("unknown environment '" + name + "'");
}

}  // namespace opal
