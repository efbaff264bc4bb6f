#include "opal/maze.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace opal {

Cell MazeLayout::cell_at(double x, double y) const {
  const double c = std::floor(x / cell_size);
  const double r = std::floor(y / cell_size);
  if (r < 0 || c < 0 || r >= static_cast<double>(rows()) || c >= static_cast<double>(cols())) {
    return Cell::WALL;
  }
  return grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
}

std::array<double, 2> MazeLayout::cell_center(std::size_t row, std::size_t col) const {
  return {(static_cast<double>(col) + 0.5) * cell_size, (static_cast<double>(row) + 0.5) * cell_size};
}

std::array<double, 2> MazeLayout::center() const {
  return {0.5 * static_cast<double>(cols()) * cell_size, 0.5 * static_cast<double>(rows()) * cell_size};
}

std::vector<std::array<std::size_t, 2>> MazeLayout::free_cells() const {
  std::vector<std::array<std::size_t, 2>> out;
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c = 0; c < cols(); ++c) {
      if (grid[r][c] != Cell::WALL) out.push_back({r, c});
    }
  }
  return out;
}

std::vector<std::string> MazeLayout::ascii_rows() const {
  std::vector<std::string> out;
  for (const auto& row : grid) {
    std::string line;
    for (Cell c : row) line.push_back(c == Cell::WALL ? '#' : c == Cell::CONSTRAINT ? 'C' : ' ');
    out.push_back(std::move(line));
  }
  return out;
}

MazeLayout parse_layout(const std::string& name, const std::vector<std::string>& rows,
                        double cell_size) {
  if (rows.empty()) throw std::invalid_argument("layout '" + name + "' has no rows");
  if (!(cell_size > 0)) throw std::invalid_argument("cell_size must be positive");
  MazeLayout layout;
  layout.name = name;
  layout.cell_size = cell_size;
  const std::size_t width = rows.front().size();
  bool any_free = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw std::invalid_argument("layout '" + name + "' row " + std::to_string(r) +
                                  " has inconsistent width");
    }
    std::vector<Cell> row;
    for (std::size_t c = 0; c < width; ++c) {
      const char ch = rows[r][c];
      Cell cell;
      switch (ch) {
        case '#': cell = Cell::WALL; break;
        case ' ': cell = Cell::FREE; break;
        case 'C': cell = Cell::CONSTRAINT; break;
        default:
          throw std::invalid_argument("layout '" + name + "': unknown cell character '" +
                                      std::string(1, ch) + "'");
      }
      const bool boundary = r == 0 || c == 0 || r + 1 == rows.size() || c + 1 == width;
      if (boundary && cell != Cell::WALL) {
        throw std::invalid_argument("layout '" + name + "': outer boundary must be wall");
      }
      any_free = any_free || cell != Cell::WALL;
      row.push_back(cell);
    }
    layout.grid.push_back(std::move(row));
  }
  if (!any_free) throw std::invalid_argument("layout '" + name + "' has no free cells");
  return layout;
}

MazeLayout load_layout(const std::filesystem::path& path, double cell_size) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open layout '" + path.string() + "'");
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  return parse_layout(path.stem().string(), rows, cell_size);
}

MazeLayout builtin_layout(const std::string& name) {
  if (name == "umaze-mini") {
    return parse_layout(name, {"#####",
                               "#   #",
                               "### #",
                               "#   #",
                               "#####"});
  }
  if (name == "medium-mini") {
    return parse_layout(name, {"########",
                               "#   #  #",
                               "# # #  #",
                               "#  CCC #",
                               "### ## #",
                               "#      #",
                               "# #  # #",
                               "########"});
  }
  if (name == "open") {
    return parse_layout(name, {"#######",
                               "#     #",
                               "#     #",
                               "#     #",
                               "#     #",
                               "#     #",
                               "#######"});
  }
  throw std::invalid_argument("unknown layout '" + name + "'");
}

PointMassState PointMassState::from_vector(std::span<const double> s) {
  if (s.size() != 4) throw std::invalid_argument("point-mass state must have 4 entries");
  return {s[0], s[1], s[2], s[3]};
}

std::array<int, 2> maze_action_force(int action) {
  if (action < 0 || action >= kMazeActionCount) {
    throw std::invalid_argument("maze action " + std::to_string(action) + " out of range");
  }
  return {action / 3 - 1, action % 3 - 1};
}

int maze_action_from_force(int fx, int fy) {
  if (fx < -1 || fx > 1 || fy < -1 || fy > 1) throw std::invalid_argument("force out of range");
  return (fx + 1) * 3 + (fy + 1);
}

namespace {

// Moves one coordinate by delta; on entering a wall cell, stops at the face
// of that cell and reports the collision.
bool advance_axis(const MazeLayout& layout, double& pos, double delta, bool along_x, double other) {
  const double target = pos + delta;
  const auto wall = [&](double p) {
    return along_x ? layout.is_wall(p, other) : layout.is_wall(other, p);
  };
  if (!wall(target)) {
    pos = target;
    return false;
  }
  const double cs = layout.cell_size;
  double clamped;
  if (delta > 0) {
    clamped = std::nextafter(std::floor(target / cs) * cs, -std::numeric_limits<double>::infinity());
    while (wall(clamped)) clamped = std::nextafter(clamped, -std::numeric_limits<double>::infinity());
  } else {
    clamped = (std::floor(target / cs) + 1.0) * cs;
    while (wall(clamped)) clamped = std::nextafter(clamped, std::numeric_limits<double>::infinity());
  }
  // Never move backwards past the starting point.
  pos = delta > 0 ? std::max(pos, clamped) : std::min(pos, clamped);
  return true;
}

}  // namespace

PointMassState maze_step(const MazeLayout& layout, const PointMassState& s, int action,
                         const MazeParams& p) {
  const auto [fx, fy] = maze_action_force(action);
  record_env_step();
  PointMassState n;
  n.vx = std::clamp((1.0 - p.damping) * s.vx + p.force * fx * p.dt, -p.v_max, p.v_max);
  n.vy = std::clamp((1.0 - p.damping) * s.vy + p.force * fy * p.dt, -p.v_max, p.v_max);
  n.x = s.x;
  n.y = s.y;
  if (advance_axis(layout, n.x, n.vx * p.dt, true, n.y)) n.vx = 0.0;
  if (advance_axis(layout, n.y, n.vy * p.dt, false, n.x)) n.vy = 0.0;
  return n;
}

double maze_gt_reward(const MazeLayout& layout, const PointMassState& s, std::array<double, 2> goal,
                      double constraint_penalty) {
  double r = std::exp(-std::hypot(s.x - goal[0], s.y - goal[1]));
  if (layout.cell_at(s.x, s.y) == Cell::CONSTRAINT) r -= constraint_penalty;
  return r;
}

double angular_progress(std::array<double, 2> center, std::array<double, 2> a,
                        std::array<double, 2> b) {
  const double ta = std::atan2(a[1] - center[1], a[0] - center[0]);
  const double tb = std::atan2(b[1] - center[1], b[0] - center[0]);
  double d = tb - ta;
  if (d > std::numbers::pi) d -= 2 * std::numbers::pi;
  if (d <= -std::numbers::pi) d += 2 * std::numbers::pi;
  return d;
}

MazeEnv::MazeEnv(std::string name, MazeLayout layout, MazeTask task, std::array<double, 2> goal,
                 MazeParams params, std::size_t horizon)
    : name_(std::move(name)),
      layout_(std::move(layout)),
      task_(task),
      goal_(goal),
      params_(params),
      horizon_(horizon) {
  if (params_.v_max * params_.dt >= layout_.cell_size) {
    throw std::invalid_argument("maze step length must be shorter than a cell");
  }
  if (layout_.cell_at(goal_[0], goal_[1]) == Cell::WALL) {
    throw std::invalid_argument("maze goal lies inside a wall");
  }
}

State MazeEnv::initial_state(Rng& rng) const {
  const auto cells = layout_.free_cells();
  const auto [r, c] = cells[uniform_index(rng, cells.size())];
  const double cs = layout_.cell_size;
  const double x = (static_cast<double>(c) + uniform01(rng)) * cs;
  const double y = (static_cast<double>(r) + uniform01(rng)) * cs;
  return {x, y, 0.0, 0.0};
}

State MazeEnv::step(std::span<const double> state, int action) const {
  return maze_step(layout_, PointMassState::from_vector(state), action, params_).to_vector();
}

double MazeEnv::reward(std::span<const double> state, std::span<const double> next_state) const {
  const auto s = PointMassState::from_vector(state);
  switch (task_) {
    case MazeTask::GOAL: return maze_gt_reward(layout_, s, goal_);
    case MazeTask::CONSTRAINED_GOAL: return maze_gt_reward(layout_, s, goal_, kConstraintPenalty);
    case MazeTask::ORBIT:
      return angular_progress(layout_.center(), {state[0], state[1]}, {next_state[0], next_state[1]});
  }
  return 0.0;
}

}  // namespace opal
