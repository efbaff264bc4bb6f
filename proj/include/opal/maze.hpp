#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "opal/env.hpp"

namespace opal {

enum class Cell { WALL, FREE, CONSTRAINT };

struct MazeLayout {
  std::string name;
  double cell_size = 1.0;
  std::vector<std::vector<Cell>> grid;  // grid[row][col]; row index grows with y

  std::size_t rows() const { return grid.size(); }
  std::size_t cols() const { return grid.empty() ? 0 : grid.front().size(); }

  // Cell containing a point; points outside the grid count as WALL.
  Cell cell_at(double x, double y) const;
  bool is_wall(double x, double y) const { return cell_at(x, y) == Cell::WALL; }
  std::array<double, 2> cell_center(std::size_t row, std::size_t col) const;
  std::array<double, 2> center() const;
  // (row, col) of every non-wall cell, row-major.
  std::vector<std::array<std::size_t, 2>> free_cells() const;
  std::vector<std::string> ascii_rows() const;
};

// '#' wall, ' ' free, 'C' constraint. Throws std::invalid_argument unless the
// grid is rectangular, walled on the outside and has a free cell.
MazeLayout parse_layout(const std::string& name, const std::vector<std::string>& rows,
                        double cell_size = 1.0);
MazeLayout load_layout(const std::filesystem::path& path, double cell_size = 1.0);
MazeLayout builtin_layout(const std::string& name);

struct PointMassState {
  double x = 0, y = 0, vx = 0, vy = 0;

  State to_vector() const { return {x, y, vx, vy}; }
  static PointMassState from_vector(std::span<const double> s);
  bool operator==(const PointMassState&) const = default;
};

struct MazeParams {
  double dt = 0.1;
  double force = 1.0;
  double v_max = 2.0;
  double damping = 0.1;
};

inline constexpr int kMazeActionCount = 9;

// Action a encodes the force direction (a / 3 - 1, a % 3 - 1); action 4 is no force.
std::array<int, 2> maze_action_force(int action);
int maze_action_from_force(int fx, int fy);

PointMassState maze_step(const MazeLayout& layout, const PointMassState& s, int action,
                         const MazeParams& params = {});

// exp(-distance to goal), minus constraint_penalty inside CONSTRAINT cells.
double maze_gt_reward(const MazeLayout& layout, const PointMassState& s,
                      std::array<double, 2> goal, double constraint_penalty = 0.0);

// Wrapped change in polar angle about `center` going from a to b; positive
// for counterclockwise motion in the x-y plane. Proxy oracle for orbit preferences.
double angular_progress(std::array<double, 2> center, std::array<double, 2> a,
                        std::array<double, 2> b);

enum class MazeTask { GOAL, CONSTRAINED_GOAL, ORBIT };

class MazeEnv final : public Environment {
 public:
  static constexpr double kConstraintPenalty = 1.0;

  MazeEnv(std::string name, MazeLayout layout, MazeTask task, std::array<double, 2> goal,
          MazeParams params = {}, std::size_t horizon = 300);

  const std::string& name() const override { return name_; }
  std::size_t state_dim() const override { return 4; }
  std::size_t action_count() const override { return kMazeActionCount; }
  std::size_t horizon() const override { return horizon_; }

  // Uniform position inside a uniformly chosen free cell, zero velocity.
  State initial_state(Rng& rng) const override;
  State step(std::span<const double> state, int action) const override;
  double reward(std::span<const double> state, std::span<const double> next_state) const override;
  std::array<double, 2> display_point(std::span<const double> state) const override {
    return {state[0], state[1]};
  }
  std::vector<std::string> layout_rows() const override { return layout_.ascii_rows(); }

  const MazeLayout& layout() const { return layout_; }
  const MazeParams& params() const { return params_; }
  MazeTask task() const { return task_; }
  std::array<double, 2> goal() const { return goal_; }

 private:
  std::string name_;
  MazeLayout layout_;
  MazeTask task_;
  std::array<double, 2> goal_;
  MazeParams params_;
  std::size_t horizon_;
};

}  // namespace opal
