#include "opal/dataset_gen.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <stdexcept>

namespace opal {

namespace {

std::string trajectory_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj-%06zu", index);
  return buf;
}

int sign_with_deadband(double v, double deadband) {
  if (v > deadband) return 1;
  if (v < -deadband) return -1;
  return 0;
}

// Shortest-path next hop on the cell grid (4-connected), via BFS from the goal.
class CellRouter {
 public:
  explicit CellRouter(const MazeLayout& layout) : layout_(layout) {}

  std::array<std::size_t, 2> next_cell(std::array<std::size_t, 2> from,
                                       std::array<std::size_t, 2> goal) {
    if (goal != goal_) {
      goal_ = goal;
      compute_distances();
    }
    std::array<std::size_t, 2> best = from;
    std::size_t best_d = distance(from);
    static constexpr int kDr[] = {-1, 1, 0, 0};
    static constexpr int kDc[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const std::array<std::size_t, 2> nb{from[0] + kDr[k], from[1] + kDc[k]};
      if (distance(nb) < best_d) {
        best_d = distance(nb);
        best = nb;
      }
    }
    return best;
  }

 private:
  std::size_t distance(std::array<std::size_t, 2> c) const {
    if (c[0] >= layout_.rows() || c[1] >= layout_.cols()) return kUnreachable;
    return dist_[c[0] * layout_.cols() + c[1]];
  }

  void compute_distances() {
    dist_.assign(layout_.rows() * layout_.cols(), kUnreachable);
    std::deque<std::array<std::size_t, 2>> queue{goal_};
    dist_[goal_[0] * layout_.cols() + goal_[1]] = 0;
    static constexpr int kDr[] = {-1, 1, 0, 0};
    static constexpr int kDc[] = {0, 0, -1, 1};
    while (!queue.empty()) {
      const auto c = queue.front();
      queue.pop_front();
      for (int k = 0; k < 4; ++k) {
        const std::size_t r = c[0] + kDr[k];
        const std::size_t col = c[1] + kDc[k];
        if (r >= layout_.rows() || col >= layout_.cols()) continue;
        if (layout_.grid[r][col] == Cell::WALL) continue;
        auto& d = dist_[r * layout_.cols() + col];
        if (d != kUnreachable) continue;
        d = dist_[c[0] * layout_.cols() + c[1]] + 1;
        queue.push_back({r, col});
      }
    }
  }

  static constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();
  const MazeLayout& layout_;
  std::array<std::size_t, 2> goal_{kUnreachable, kUnreachable};
  std::vector<std::size_t> dist_;
};

void append_chunked(OfflineDataset& d, std::vector<Transition>& log, std::size_t traj_len,
                    const std::map<std::string, std::string>& meta) {
  for (std::size_t begin = 0; begin < log.size(); begin += traj_len) {
    const std::size_t end = std::min(log.size(), begin + traj_len);
    Trajectory t;
    t.id = trajectory_id(d.trajectories.size());
    t.meta = meta;
    t.transitions.assign(std::make_move_iterator(log.begin() + static_cast<std::ptrdiff_t>(begin)),
                         std::make_move_iterator(log.begin() + static_cast<std::ptrdiff_t>(end)));
    d.trajectories.push_back(std::move(t));
  }
}

}  // namespace

OfflineDataset gen_maze_dataset(const MazeEnv& env, std::size_t n_steps, std::uint64_t seed,
                                std::size_t traj_len, const WaypointControllerConfig& cfg) {
  if (n_steps == 0) throw std::invalid_argument("n_steps must be >= 1");
  if (traj_len == 0) throw std::invalid_argument("traj_len must be >= 1");
  const MazeLayout& layout = env.layout();
  const auto cells = layout.free_cells();
  if (cells.empty()) throw std::invalid_argument("layout has no free cells");

  Rng rng = make_rng(seed, 0);
  CellRouter router(layout);
  const double cs = layout.cell_size;
  const double v_brake = 0.5 * env.params().v_max;

  State state = env.initial_state(rng);
  std::array<std::size_t, 2> waypoint = cells[uniform_index(rng, cells.size())];
  std::size_t since_resample = 0;

  std::vector<Transition> log;
  log.reserve(n_steps);
  for (std::size_t step = 0; step < n_steps; ++step) {
    const auto wp_center = layout.cell_center(waypoint[0], waypoint[1]);
    if (std::hypot(state[0] - wp_center[0], state[1] - wp_center[1]) < cfg.reach_radius ||
        since_resample >= cfg.waypoint_timeout) {
      waypoint = cells[uniform_index(rng, cells.size())];
      since_resample = 0;
    }
    ++since_resample;

    const std::array<std::size_t, 2> here{static_cast<std::size_t>(std::floor(state[1] / cs)),
                                          static_cast<std::size_t>(std::floor(state[0] / cs))};
    const auto hop = cfg.route_around_walls ? router.next_cell(here, waypoint) : waypoint;
    const auto target = layout.cell_center(hop[0], hop[1]);

    int fx = sign_with_deadband(target[0] - state[0], cfg.deadband);
    int fy = sign_with_deadband(target[1] - state[1], cfg.deadband);
    if (std::hypot(state[2], state[3]) > v_brake) {
      fx = sign_with_deadband(-state[2], 0.0);
      fy = sign_with_deadband(-state[3], 0.0);
    }
    const int action = maze_action_from_force(fx, fy);

    Transition tr;
    tr.state = state;
    tr.action = action;
    tr.next_state = env.step(state, action);
    tr.gt_reward = env.reward(tr.state, tr.next_state);
    state = tr.next_state;
    log.push_back(std::move(tr));
  }

  OfflineDataset d;
  d.env_name = env.name();
  d.state_dim = env.state_dim();
  d.action_count = env.action_count();
  append_chunked(d, log, traj_len, {{"behavior", "waypoint"}, {"seed", std::to_string(seed)}});
  return d;
}

OfflineDataset gen_random_dataset(const Environment& env, std::size_t n_traj, std::size_t traj_len,
                                  std::uint64_t seed) {
  if (n_traj == 0 || traj_len == 0) throw std::invalid_argument("counts must be >= 1");
  Rng rng = make_rng(seed, 1);
  OfflineDataset d;
  d.env_name = env.name();
  d.state_dim = env.state_dim();
  d.action_count = env.action_count();
  d.trajectories.reserve(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    Trajectory t;
    t.id = trajectory_id(i);
    t.meta = {{"behavior", "uniform-random"}, {"seed", std::to_string(seed)}};
    t.transitions.reserve(traj_len);
    State state = env.initial_state(rng);
    for (std::size_t k = 0; k < traj_len; ++k) {
      Transition tr;
      tr.state = state;
      tr.action = static_cast<int>(uniform_index(rng, env.action_count()));
      tr.next_state = env.step(state, tr.action);
      tr.gt_reward = env.reward(tr.state, tr.next_state);
      state = tr.next_state;
      t.transitions.push_back(std::move(tr));
    }
    d.trajectories.push_back(std::move(t));
  }
  return d;
}

OfflineDataset gen_dataset(const Environment& env, std::size_t n_steps, std::uint64_t seed,
                           std::size_t traj_len) {
  if (const auto* maze = dynamic_cast<const MazeEnv*>(&env)) {
    return gen_maze_dataset(*maze, n_steps, seed, traj_len);
  }
  if (n_steps == 0 || traj_len == 0) throw std::invalid_argument("counts must be >= 1");
  const std::size_t n_traj = (n_steps + traj_len - 1) / traj_len;
  return gen_random_dataset(env, n_traj, traj_len, seed);
}

}  // namespace opal
