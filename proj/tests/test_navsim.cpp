#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <deque>
#include <numbers>
#include <optional>
#include <random>

#include "narraguide/navsim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace narraguide;
using testing_support::bfs_distance;
using testing_support::museum;

namespace {

constexpr double kPi = std::numbers::pi;

Exhibit make_exhibit(int id, Pose pose) {
  Exhibit e;
  e.id = id;
  e.name = "Exhibit " + std::to_string(id);
  e.area_id = "all";
  e.viewing_pose = pose;
  e.intro = "intro";
  e.sample_dialogue = {{Speaker::guide, "q"}, {Speaker::visitor, "a"}};
  return e;
}

// Single-area map over `occupied` with one exhibit (id 1) at `goal`.
AnnotatedMap single_goal_map(int w, int h, double res, std::vector<std::uint8_t> occupied, Pose goal) {
  GridMap g(res, {0.0, 0.0}, w, h, std::move(occupied));
  Area a{"all", "All", "", {}};
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.occupied(g.cell_at(i))) a.cell_ids.push_back(i);
  }
  return AnnotatedMap(g, {a}, {make_exhibit(1, goal)}, {1});
}

struct Drive {
  RobotState state;
  double t = 0.0;
  std::optional<int> arrived;
  double arrived_at = 0.0;
};

Drive drive(RobotState s, const MotionConfig& cfg, double dt = 0.1, double limit = 600.0) {
  Drive d;
  d.state = std::move(s);
  while (d.t < limit) {
    auto r = tick(d.state, dt, cfg);
    d.state = std::move(r.state);
    if (r.arrived) {
      d.arrived = r.arrived;
      d.arrived_at = d.t + r.arrived_after;
      d.t += dt;
      return d;
    }
    d.t += dt;
  }
  return d;
}

}  // namespace

TEST(PlanPath, MatchesBfsOracleOnRandomGrids) {
  const auto started = std::chrono::steady_clock::now();
  int cases = 0;
  for (std::uint32_t seed = 1; cases < 50; ++seed) {
    std::mt19937 rng(seed);
    std::bernoulli_distribution wall(0.2);
    std::uniform_int_distribution<int> coord(0, 19);
    std::vector<std::uint8_t> occ(400);
    for (auto& v : occ) v = wall(rng) ? 1 : 0;
    const int sc = coord(rng), sr = coord(rng), gc = coord(rng), gr = coord(rng);
    occ[static_cast<std::size_t>(sr * 20 + sc)] = 0;
    occ[static_cast<std::size_t>(gr * 20 + gc)] = 0;
    const auto oracle = bfs_distance(20, 20, occ, sc, sr, gc, gr);
    if (!oracle) continue;  // resample disconnected instances
    ++cases;
    const auto m = single_goal_map(20, 20, 1.0, occ, Pose(gc + 0.5, gr + 0.5, 0.0));
    const Plan p = plan_path(m, Pose(sc + 0.5, sr + 0.5, 0.0), 1);
    ASSERT_EQ(p.cells.size(), static_cast<std::size_t>(*oracle) + 1) << "seed " << seed;
    EXPECT_EQ(p.cells.front(), (Cell{sc, sr}));
    EXPECT_EQ(p.cells.back(), (Cell{gc, gr}));
    for (std::size_t i = 1; i < p.cells.size(); ++i) {
      EXPECT_EQ(std::abs(p.cells[i].col - p.cells[i - 1].col) + std::abs(p.cells[i].row - p.cells[i - 1].row), 1);
      EXPECT_FALSE(m.grid().occupied(p.cells[i]));
    }
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(), 1.0);
}

TEST(PlanPath, SameCellGivesSingleWaypoint) {
  const auto m = single_goal_map(3, 3, 1.0, std::vector<std::uint8_t>(9, 0), Pose(1.5, 1.5, 1.0));
  const Plan p = plan_path(m, Pose(1.5, 1.5, 0.0), 1);
  EXPECT_EQ(p.waypoints.size(), 1u);
  EXPECT_DOUBLE_EQ(p.final_heading, 1.0);
}

TEST(PlanPath, WalledOffGoalHasNoPath) {
  std::vector<std::uint8_t> occ(25, 0);
  for (int c = 0; c < 5; ++c) occ[static_cast<std::size_t>(2 * 5 + c)] = 1;
  const auto m = single_goal_map(5, 5, 1.0, occ, Pose(2.5, 4.5, 0.0));
  EXPECT_THROW(plan_path(m, Pose(0.5, 0.5, 0.0), 1), NoPath);
  EXPECT_THROW(plan_path(m, Pose(0.5, 0.5, 0.0), 99), UnknownExhibit);
}

TEST(LowLevel, ForwardAndTurnKinematics) {
  const auto m = single_goal_map(10, 10, 0.5, std::vector<std::uint8_t>(100, 0), Pose(0.25, 0.25, 0.0));
  const MotionConfig cfg;
  RobotState s;
  s.pose = Pose(1.0, 1.0, 0.0);
  auto r = apply_low_level(s, LowLevelCommand::forward, cfg, m);
  EXPECT_NEAR(r.state.pose.x, 1.5, 1e-12);
  EXPECT_NEAR(r.state.pose.y, 1.0, 1e-12);
  EXPECT_FALSE(r.blocked);
  EXPECT_EQ(r.state.mode, Mode::user_control);

  r = apply_low_level(s, LowLevelCommand::turn_left, cfg, m);
  EXPECT_NEAR(r.state.pose.theta, kPi / 6, 1e-12);
  r = apply_low_level(s, LowLevelCommand::turn_right, cfg, m);
  EXPECT_NEAR(r.state.pose.theta, -kPi / 6, 1e-12);
  r = apply_low_level(s, LowLevelCommand::backward, cfg, m);
  EXPECT_NEAR(r.state.pose.x, 0.5, 1e-12);
  r = apply_low_level(s, LowLevelCommand::stop, cfg, m);
  EXPECT_EQ(r.state.mode, Mode::idle);
  EXPECT_EQ(r.state.pose, s.pose);
}

TEST(LowLevel, StopsShortOfWall) {
  // 0.2 m cells; column 6 (x in [1.2, 1.4)) is a wall, 0.2 m ahead of x = 1.0.
  std::vector<std::uint8_t> occ(100, 0);
  for (int r = 0; r < 10; ++r) occ[static_cast<std::size_t>(r * 10 + 6)] = 1;
  const auto m = single_goal_map(10, 10, 0.2, occ, Pose(0.1, 0.1, 0.0));
  const MotionConfig cfg;
  RobotState s;
  s.pose = Pose(1.0, 1.0, 0.0);
  const auto r = apply_low_level(s, LowLevelCommand::forward, cfg, m);
  EXPECT_TRUE(r.blocked);
  const double advance = r.state.pose.x - 1.0;
  EXPECT_LT(advance, 0.2);
  EXPECT_GE(advance, 0.2 - collision_substep(m.grid()) - 1e-12);
  EXPECT_TRUE(m.grid().point_free(r.state.pose.position()));
}

TEST(LowLevel, PreemptsActivePlan) {
  const auto m = single_goal_map(10, 1, 0.5, std::vector<std::uint8_t>(10, 0), Pose(4.25, 0.25, 0.0));
  RobotState s;
  s.pose = Pose(0.25, 0.25, 0.0);
  s = begin_autonomous(s, plan_path(m, s.pose, 1));
  const auto r = apply_low_level(s, LowLevelCommand::turn_left, MotionConfig{}, m);
  EXPECT_EQ(r.state.mode, Mode::user_control);
  EXPECT_FALSE(r.state.active_plan);
  EXPECT_FALSE(r.state.goal_exhibit);
}

TEST(Tick, StraightCorridorTakesDistanceOverSpeed) {
  // 2 m between the start and goal cell centers.
  const auto m = single_goal_map(5, 1, 0.5, std::vector<std::uint8_t>(5, 0), Pose(2.25, 0.25, 0.0));
  const MotionConfig cfg;
  RobotState s;
  s.pose = Pose(0.25, 0.25, 0.0);
  const Plan plan = plan_path(m, s.pose, 1);
  EXPECT_NEAR(eta(plan, cfg), 2.0 / 0.5, 1e-12);
  const Drive d = drive(begin_autonomous(s, plan), cfg);
  ASSERT_EQ(d.arrived, 1);
  EXPECT_NEAR(d.arrived_at, 4.0, 1e-9);
  EXPECT_NEAR(d.t, 4.0, 0.1 + 1e-9);

  // Idle after arrival: further ticks change nothing.
  const auto after = tick(d.state, 1.0, cfg);
  EXPECT_EQ(after.state, d.state);
  EXPECT_FALSE(after.arrived);
}

TEST(Tick, NinetyDegreeTurnTakesTwoSeconds) {
  const auto m = single_goal_map(5, 1, 0.5, std::vector<std::uint8_t>(5, 0), Pose(2.25, 0.25, 0.0));
  const MotionConfig cfg;
  RobotState s;
  s.pose = Pose(0.25, 0.25, kPi / 2);
  const Plan plan = plan_path(m, s.pose, 1);
  EXPECT_NEAR(eta(plan, cfg), (kPi / 2) / (kPi / 4) + 4.0, 1e-12);
  s = begin_autonomous(s, plan);

  auto r = tick(s, 1.9, cfg);
  EXPECT_DOUBLE_EQ(r.state.pose.x, 0.25);
  EXPECT_NEAR(r.state.pose.theta, kPi / 2 - 1.9 * kPi / 4, 1e-12);
  r = tick(r.state, 0.1, cfg);
  EXPECT_NEAR(r.state.pose.theta, 0.0, 1e-12);
  EXPECT_NEAR(r.state.pose.x, 0.25, 1e-12);
  r = tick(r.state, 0.2, cfg);
  EXPECT_NEAR(r.state.pose.x, 0.25 + 0.2 * 0.5, 1e-12);
}

TEST(Eta, ZeroForAlignedSingleWaypoint) {
  const auto m = single_goal_map(3, 3, 1.0, std::vector<std::uint8_t>(9, 0), Pose(1.5, 1.5, 0.0));
  EXPECT_DOUBLE_EQ(eta(plan_path(m, Pose(1.5, 1.5, 0.0), 1), MotionConfig{}), 0.0);
}

TEST(Arrival, EveryFixtureExhibitWithinTolerance) {
  const auto& m = *museum();
  const MotionConfig cfg;
  for (const auto& e : m.exhibits()) {
    RobotState s;
    s.pose = m.start_pose();
    const Plan plan = plan_path(m, s.pose, e.id);
    const Drive d = drive(begin_autonomous(s, plan), cfg);
    ASSERT_EQ(d.arrived, e.id);
    EXPECT_LE(distance(d.state.pose.position(), e.viewing_pose.position()), cfg.arrival_pos_tol) << e.id;
    EXPECT_LE(std::abs(normalize_angle(d.state.pose.theta - e.viewing_pose.theta)), cfg.arrival_heading_tol) << e.id;
    EXPECT_NEAR(d.arrived_at, eta(plan, cfg), 1e-6) << e.id;
    EXPECT_EQ(d.state.mode, Mode::idle);
  }
}

TEST(Determinism, IdenticalInputsGiveIdenticalTrajectories) {
  const auto& m = *museum();
  auto run = [&] {
    std::vector<RobotState> trace;
    RobotState s;
    s.pose = m.start_pose();
    s = begin_autonomous(s, plan_path(m, s.pose, 24));
    for (int i = 0; i < 400; ++i) {
      s = tick(s, 0.137, MotionConfig{}).state;
      trace.push_back(s);
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(Safety, PositionCellStaysFreeUnderRandomCommands) {
  for (std::uint32_t seed = 1; seed <= 30; ++seed) {
    std::mt19937 rng(seed);
    std::bernoulli_distribution wall(0.25);
    std::vector<std::uint8_t> occ(144);
    for (auto& v : occ) v = wall(rng) ? 1 : 0;
    occ[0] = 0;
    occ[143] = 0;
    if (!bfs_distance(12, 12, occ, 0, 0, 11, 11)) continue;
    const auto m = single_goal_map(12, 12, 0.5, occ, Pose(5.75, 5.75, 0.0));
    const MotionConfig cfg;
    RobotState s;
    s.pose = Pose(0.25, 0.25, 0.0);
    std::uniform_int_distribution<int> action(0, 6);
    std::uniform_real_distribution<double> dt(0.01, 0.5);
    for (int step = 0; step < 300; ++step) {
      const int a = action(rng);
      if (a < 5) {
        s = apply_low_level(s, static_cast<LowLevelCommand>(a), cfg, m).state;
      } else if (a == 5 && s.mode != Mode::autonomous) {
        try {
          s = begin_autonomous(s, plan_path(m, s.pose, 1));
        } catch (const NoPath&) {
        }
      } else {
        s = tick(s, dt(rng), cfg).state;
      }
      ASSERT_TRUE(m.grid().point_free(s.pose.position())) << "seed " << seed << " step " << step;
    }
  }
}
