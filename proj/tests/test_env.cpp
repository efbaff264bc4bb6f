#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "helpers.hpp"
#include "opal/cartpole.hpp"
#include "opal/maze.hpp"

using namespace opal;

TEST_CASE("maze action encoding") {
  CHECK(maze_action_force(4) == std::array<int, 2>{0, 0});
  CHECK(maze_action_force(0) == std::array<int, 2>{-1, -1});
  CHECK(maze_action_force(8) == std::array<int, 2>{1, 1});
  for (int a = 0; a < kMazeActionCount; ++a) {
    const auto f = maze_action_force(a);
    CHECK(maze_action_from_force(f[0], f[1]) == a);
  }
  CHECK_THROWS(maze_action_force(9));
  CHECK_THROWS(maze_action_force(-1));
}

TEST_CASE("maze step: no force at rest is a fixed point") {
  const auto& layout = test::umaze().layout();
  const PointMassState s{1.5, 1.5, 0.0, 0.0};
  CHECK(maze_step(layout, s, maze_action_from_force(0, 0)) == s);
}

TEST_CASE("maze step: one hand-integrated Euler step in free space") {
  const auto layout = builtin_layout("open");
  MazeParams p;
  p.damping = 0.0;
  const PointMassState s{3.5, 3.5, 0.0, 0.0};
  const PointMassState n = maze_step(layout, s, maze_action_from_force(1, 0), p);
  CHECK(n.vx == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(n.x == doctest::Approx(3.51).epsilon(1e-12));
  CHECK(n.y == 3.5);
  CHECK(n.vy == 0.0);
}

TEST_CASE("maze step: damping and velocity clamp") {
  const auto layout = builtin_layout("open");
  MazeParams p;
  const PointMassState s{3.5, 3.5, 1.0, 1.99};
  const PointMassState n = maze_step(layout, s, maze_action_from_force(-1, 1), p);
  // (1 - 0.1) * 1.0 - 0.1 and clamp(0.9 * 1.99 + 0.1, 2)
  CHECK(n.vx == doctest::Approx(0.8));
  CHECK(n.vy == doctest::Approx(1.891));
  const PointMassState fast{3.5, 3.5, 0.0, 2.0};
  MazeParams undamped;
  undamped.damping = 0.0;
  CHECK(maze_step(layout, fast, maze_action_from_force(0, 1), undamped).vy == 2.0);
}

TEST_CASE("maze step: pushing into a wall stops at the face") {
  const auto& layout = test::umaze().layout();
  // top-right free cell is (row 1, col 3); its right face is x = 4.
  const PointMassState s{3.95, 1.5, 1.0, 0.0};
  const PointMassState n = maze_step(layout, s, maze_action_from_force(1, 0));
  CHECK(n.vx == 0.0);
  CHECK(n.x < 4.0);
  CHECK(n.x > 3.95);
  CHECK_FALSE(layout.is_wall(n.x, n.y));
}

TEST_CASE("maze step never ends inside a wall") {
  const auto& env = test::umaze();
  const auto& layout = env.layout();
  Rng rng = make_rng(11, 0);
  for (int trial = 0; trial < 20000; ++trial) {
    const auto cells = layout.free_cells();
    const auto c = cells[uniform_index(rng, cells.size())];
    PointMassState s{static_cast<double>(c[1]) + uniform01(rng), static_cast<double>(c[0]) + uniform01(rng),
                     uniform_real(rng, -2.0, 2.0), uniform_real(rng, -2.0, 2.0)};
    if (layout.is_wall(s.x, s.y)) continue;
    for (int k = 0; k < 5; ++k) {
      s = maze_step(layout, s, static_cast<int>(uniform_index(rng, 9)));
      REQUIRE_FALSE(layout.is_wall(s.x, s.y));
      REQUIRE(std::abs(s.vx) <= 2.0);
      REQUIRE(std::abs(s.vy) <= 2.0);
    }
  }
}

TEST_CASE("maze dynamics are bit-exact deterministic") {
  const auto& layout = test::umaze().layout();
  const PointMassState s{2.3, 1.7, 0.4, -0.3};
  CHECK(maze_step(layout, s, 2) == maze_step(layout, s, 2));
}

TEST_CASE("maze ground-truth reward") {
  const auto& layout = test::umaze().layout();
  CHECK(maze_gt_reward(layout, {1.5, 1.5, 0, 0}, {1.5, 1.5}) == 1.0);
  CHECK(maze_gt_reward(layout, {2.5, 1.5, 0, 0}, {1.5, 1.5}) == doctest::Approx(0.3679).epsilon(1e-4));
  CHECK(maze_gt_reward(layout, {2.5, 1.5, 0, 0}, {1.5, 1.5}) == std::exp(-1.0));

  const auto constrained = make_environment("medium-mini-constrained");
  const auto& cm = dynamic_cast<const MazeEnv&>(*constrained);
  const auto& ml = cm.layout();
  bool found = false;
  for (const auto& c : ml.free_cells()) {
    if (ml.grid[c[0]][c[1]] != Cell::CONSTRAINT) continue;
    const auto p = ml.cell_center(c[0], c[1]);
    const PointMassState s{p[0], p[1], 0, 0};
    CHECK(maze_gt_reward(ml, s, cm.goal(), 1.0) == doctest::Approx(maze_gt_reward(ml, s, cm.goal()) - 1.0));
    found = true;
  }
  CHECK(found);
}

TEST_CASE("maze reward stays in (0, 1] without the penalty") {
  const auto& env = test::umaze();
  Rng rng = make_rng(5, 0);
  for (int i = 0; i < 1000; ++i) {
    const State s = env.initial_state(rng);
    const double r = env.reward(s, s);
    CHECK(r > 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("layout parsing") {
  CHECK_NOTHROW(parse_layout("ok", {"###", "# #", "###"}));
  CHECK_THROWS_AS(parse_layout("ragged", {"###", "# ", "###"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("open edge", {"# #", "# #", "###"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("solid", {"###", "###", "###"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("junk", {"###", "#x#", "###"}), std::invalid_argument);

  const auto l = parse_layout("c", {"####", "# C#", "####"});
  CHECK(l.cell_at(1.5, 1.5) == Cell::FREE);
  CHECK(l.cell_at(2.5, 1.5) == Cell::CONSTRAINT);
  CHECK(l.cell_at(-0.5, 1.5) == Cell::WALL);
  CHECK(l.cell_at(10.0, 1.5) == Cell::WALL);
  CHECK(l.ascii_rows() == std::vector<std::string>{"####", "# C#", "####"});
  CHECK(l.free_cells().size() == 2);

  const auto dir = test::scratch_dir("layout");
  {
    std::ofstream f(dir / "m.txt");
    f << "#####\n#   #\n#####\n";
  }
  CHECK(load_layout(dir / "m.txt").free_cells().size() == 3);
}

TEST_CASE("medium-mini constraint region is three central cells in a row") {
  const auto l = builtin_layout("medium-mini");
  std::vector<std::array<std::size_t, 2>> cs;
  for (const auto& c : l.free_cells()) {
    if (l.grid[c[0]][c[1]] == Cell::CONSTRAINT) cs.push_back(c);
  }
  REQUIRE(cs.size() == 3);
  CHECK(cs[0][0] == cs[1][0]);
  CHECK(cs[1][0] == cs[2][0]);
  CHECK(cs[1][1] == cs[0][1] + 1);
  CHECK(cs[2][1] == cs[1][1] + 1);
}

TEST_CASE("angular progress wraps and has counterclockwise sign") {
  const std::array<double, 2> c{0, 0};
  CHECK(angular_progress(c, {1, 0}, {0, 1}) == doctest::Approx(std::numbers::pi / 2));
  CHECK(angular_progress(c, {0, 1}, {1, 0}) == doctest::Approx(-std::numbers::pi / 2));
  CHECK(angular_progress(c, {-1, 0.01}, {-1, -0.01}) == doctest::Approx(0.02).epsilon(0.01));
}

TEST_CASE("cart-pole: upright equilibrium with no force stays put") {
  const CartPoleState s{};
  const CartPoleState n = cartpole_step(s, 0);
  CHECK(n.theta == 0.0);
  CHECK(n.theta_dot == 0.0);
  CHECK(n.x == 0.0);
}

TEST_CASE("cart-pole: one step matches hand integration") {
  // Reference state and constants; equations written out independently.
  const double x = 0.1, xd = -0.2, th = 0.3, thd = 0.5;
  const double g = 9.8, mc = 1.0, mp = 0.1, l = 0.5, dt = 0.02, F = 10.0;
  const double M = mc + mp;
  const double s = std::sin(th), c = std::cos(th);
  const double a = (F + mp * l * thd * thd * s) / M;
  const double thdd = (g * s - c * a) / (l * (4.0 / 3.0 - mp * c * c / M));
  const double xdd = a - mp * l * thdd * c / M;

  const CartPoleState n = cartpole_step({x, xd, th, thd}, 2);
  CHECK(n.x == doctest::Approx(x + dt * xd).epsilon(1e-14));
  CHECK(n.x_dot == doctest::Approx(xd + dt * xdd).epsilon(1e-14));
  CHECK(n.theta == doctest::Approx(th + dt * thd).epsilon(1e-14));
  CHECK(n.theta_dot == doctest::Approx(thd + dt * thdd).epsilon(1e-14));
}

TEST_CASE("cart-pole mirror symmetry") {
  Rng rng = make_rng(9, 0);
  for (int i = 0; i < 1000; ++i) {
    const CartPoleState s{uniform_real(rng, -2, 2), uniform_real(rng, -3, 3), uniform_real(rng, -7, 7),
                          uniform_real(rng, -8, 8)};
    const int a = static_cast<int>(uniform_index(rng, 3));
    const CartPoleState n = cartpole_step(s, a);
    const CartPoleState m = cartpole_step({-s.x, -s.x_dot, -s.theta, -s.theta_dot}, cartpole_mirror_action(a));
    CHECK(std::abs(n.x + m.x) <= 1e-12);
    CHECK(std::abs(n.x_dot + m.x_dot) <= 1e-12);
    CHECK(std::abs(n.theta + m.theta) <= 1e-12);
    CHECK(std::abs(n.theta_dot + m.theta_dot) <= 1e-12);
  }
}

TEST_CASE("cart-pole never wraps the angle") {
  CartPoleState s{0, 0, 3.1, 8.0};
  for (int i = 0; i < 100; ++i) s = cartpole_step(s, 0);
  CHECK(s.theta > 2 * std::numbers::pi);
}

TEST_CASE("cart-pole rewards") {
  CHECK(cartpole_gt_reward({0, 0, 0, 0}, CartPoleTask::BALANCE) == 1.0);
  CHECK(cartpole_gt_reward({0, 0, std::numbers::pi, 0}, CartPoleTask::BALANCE) == doctest::Approx(-1.0));
  const CartPoleState s{0.7, 0.1, 0.4, 2.5};
  const double cw = cartpole_gt_reward(s, CartPoleTask::CW_WINDMILL);
  const double ccw = cartpole_gt_reward(s, CartPoleTask::CCW_WINDMILL);
  CHECK(cw + ccw == doctest::Approx(-2 * kCartPositionPenalty * 0.7));
  CHECK(ccw > cw);
}

TEST_CASE("environment registry and step counter") {
  for (const auto& name : environment_names()) {
    const auto env = make_environment(name);
    CHECK(env->name() == name);
    Rng rng = make_rng(0, 0);
    const State s = env->initial_state(rng);
    CHECK(s.size() == env->state_dim());
    const auto before = env_step_count();
    env->step(s, 0);
    CHECK(env_step_count() == before + 1);
  }
  CHECK_THROWS_AS(make_environment("nope"), std::invalid_argument);
}
