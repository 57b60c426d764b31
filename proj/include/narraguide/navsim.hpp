#pragma once

// Robot motion simulation: autonomous goal-directed navigation to exhibit
// viewing poses and low-level user control.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "narraguide/error.hpp"
#include "narraguide/worldmap.hpp"

namespace narraguide {

enum class Mode { idle, autonomous, user_control };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::idle: return "idle";
    case Mode::autonomous: return "autonomous";
    case Mode::user_control: return "user_control";
  }
  return "idle";
}

enum class LowLevelCommand { forward, backward, turn_left, turn_right, stop };

inline std::string_view to_string(LowLevelCommand c) {
  switch (c) {
    case LowLevelCommand::forward: return "forward";
    case LowLevelCommand::backward: return "backward";
    case LowLevelCommand::turn_left: return "turn_left";
    case LowLevelCommand::turn_right: return "turn_right";
    case LowLevelCommand::stop: return "stop";
  }
  return "stop";
}

inline std::optional<LowLevelCommand> parse_low_level_command(std::string_view s) {
  if (s == "forward") return LowLevelCommand::forward;
  if (s == "backward") return LowLevelCommand::backward;
  if (s == "turn_left") return LowLevelCommand::turn_left;
  if (s == "turn_right") return LowLevelCommand::turn_right;
  if (s == "stop") return LowLevelCommand::stop;
  return std::nullopt;
}

struct MotionConfig {
  double linear_speed = 0.5;                             // m/s
  double angular_speed = std::numbers::pi / 4.0;         // rad/s
  double step_distance = 0.5;                            // m per translate command
  double step_angle = std::numbers::pi / 6.0;            // rad per turn command
  double arrival_pos_tol = 0.1;                          // m
  double arrival_heading_tol = 5.0 * std::numbers::pi / 180.0;  // rad

  void validate() const {
    if (!(linear_speed > 0 && angular_speed > 0 && step_distance > 0 && step_angle > 0 &&
          arrival_pos_tol > 0 && arrival_heading_tol > 0)) {
      throw ValidationError("motion config values must all be strictly positive");
    }
  }
};

/// Route to an exhibit: 4-connected free cells from the start cell to the
/// goal's viewing-pose cell. The robot drives through each cell center, then
/// to the exact viewing position, then turns to final_heading.
struct Plan {
  Pose start;
  std::vector<Cell> cells;
  std::vector<Point> waypoints;  // centers of `cells`
  Point goal;
  double final_heading = 0.0;
  int goal_exhibit = 0;

  /// Points the motion model drives through, in order.
  std::vector<Point> targets() const {
    std::vector<Point> t = waypoints;
    t.push_back(goal);
    return t;
  }
  friend bool operator==(const Plan&, const Plan&) = default;
};

struct RobotState {
  Pose pose;
  Mode mode = Mode::idle;
  std::optional<Plan> active_plan;
  std::optional<int> goal_exhibit;
  std::size_t next_target = 0;  // index into active_plan->targets()

  friend bool operator==(const RobotState&, const RobotState&) = default;
};

namespace detail {
inline constexpr double kPositionEps = 1e-9;
inline constexpr double kAngleEps = 1e-9;
}  // namespace detail

/// Ray-march sampling interval used by low-level translation.
inline double collision_substep(const GridMap& grid) { return grid.resolution() / 20.0; }

/// Shortest 4-connected route (A* with a Manhattan heuristic) from `start`
/// to the viewing pose of `goal_exhibit_id`.
inline Plan plan_path(const AnnotatedMap& map, const Pose& start, int goal_exhibit_id) {
  const Exhibit& goal = map.exhibit(goal_exhibit_id);
  const GridMap& grid = map.grid();
  const Cell from = grid.cell_of(start.position());
  if (grid.occupied(from)) throw OccupiedCell("start pose lies on an occupied cell");
  const Cell to = grid.cell_of(goal.viewing_pose.position());

  const std::size_t n = grid.size();
  constexpr int kUnvisited = std::numeric_limits<int>::max();
  std::vector<int> cost(n, kUnvisited);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);
  auto heuristic = [&](Cell c) { return std::abs(c.col - to.col) + std::abs(c.row - to.row); };

  // (f, h, insertion order, cell index); lowest first.
  using Entry = std::tuple<int, int, std::uint64_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::uint64_t order = 0;
  cost[grid.index(from)] = 0;
  open.emplace(heuristic(from), heuristic(from), order++, grid.index(from));

  constexpr int kDx[4] = {1, 0, -1, 0};
  constexpr int kDy[4] = {0, 1, 0, -1};
  bool found = false;
  while (!open.empty()) {
    const auto [f, h, ord, idx] = open.top();
    open.pop();
    if (closed[idx]) continue;
    closed[idx] = 1;
    const Cell c = grid.cell_at(idx);
    if (c == to) {
      found = true;
      break;
    }
    for (int k = 0; k < 4; ++k) {
      const Cell nb{c.col + kDx[k], c.row + kDy[k]};
      if (!grid.free(nb)) continue;
      const std::size_t ni = grid.index(nb);
      const int g = cost[idx] + 1;
      if (g < cost[ni]) {
        cost[ni] = g;
        parent[ni] = static_cast<std::int64_t>(idx);
        const int hn = heuristic(nb);
        open.emplace(g + hn, hn, order++, ni);
      }
    }
  }
  if (!found) throw NoPath("no free route to exhibit " + std::to_string(goal_exhibit_id));

  Plan plan;
  plan.start = start;
  for (auto i = static_cast<std::int64_t>(grid.index(to)); i != -1; i = parent[static_cast<std::size_t>(i)]) {
    plan.cells.push_back(grid.cell_at(static_cast<std::size_t>(i)));
  }
  std::reverse(plan.cells.begin(), plan.cells.end());
  for (const Cell& c : plan.cells) plan.waypoints.push_back(grid.center(c));
  plan.goal = goal.viewing_pose.position();
  plan.final_heading = goal.viewing_pose.theta;
  plan.goal_exhibit = goal_exhibit_id;
  return plan;
}

/// Starts autonomous navigation along `plan`.
inline RobotState begin_autonomous(RobotState state, Plan plan) {
  state.goal_exhibit = plan.goal_exhibit;
  state.active_plan = std::move(plan);
  state.mode = Mode::autonomous;
  state.next_target = 0;
  return state;
}

/// Time to execute a plan under the turn-then-translate motion model.
inline double eta(const Plan& plan, const MotionConfig& cfg) {
  double t = 0.0;
  Point pos = plan.start.position();
  double heading = plan.start.theta;
  for (const Point& target : plan.targets()) {
    const double d = distance(pos, target);
    if (d <= detail::kPositionEps) continue;
    const double desired = std::atan2(target.y - pos.y, target.x - pos.x);
    t += std::abs(normalize_angle(desired - heading)) / cfg.angular_speed;
    t += d / cfg.linear_speed;
    heading = desired;
    pos = target;
  }
  t += std::abs(normalize_angle(plan.final_heading - heading)) / cfg.angular_speed;
  return t;
}

struct LowLevelResult {
  RobotState state;
  bool blocked = false;
};

/// Applies one directional command. Always preempts an active plan.
inline LowLevelResult apply_low_level(RobotState state, LowLevelCommand cmd, const MotionConfig& cfg,
                                      const AnnotatedMap& map) {
  LowLevelResult out;
  state.active_plan.reset();
  state.goal_exhibit.reset();
  state.next_target = 0;
  state.mode = cmd == LowLevelCommand::stop ? Mode::idle : Mode::user_control;

  switch (cmd) {
    case LowLevelCommand::stop:
      break;
    case LowLevelCommand::turn_left:
      state.pose.theta = normalize_angle(state.pose.theta + cfg.step_angle);
      break;
    case LowLevelCommand::turn_right:
      state.pose.theta = normalize_angle(state.pose.theta - cfg.step_angle);
      break;
    case LowLevelCommand::forward:
    case LowLevelCommand::backward: {
      const double sign = cmd == LowLevelCommand::forward ? 1.0 : -1.0;
      const double dx = sign * std::cos(state.pose.theta);
      const double dy = sign * std::sin(state.pose.theta);
      const double substep = collision_substep(map.grid());
      const auto samples = static_cast<int>(std::ceil(cfg.step_distance / substep));
      Point last = state.pose.position();
      for (int i = 1; i <= samples; ++i) {
        const double s = std::min(i * substep, cfg.step_distance);
        const Point p{state.pose.x + dx * s, state.pose.y + dy * s};
        if (!map.grid().point_free(p)) {
          out.blocked = true;
          break;
        }
        last = p;
      }
      state.pose.x = last.x;
      state.pose.y = last.y;
      break;
    }
  }
  out.state = std::move(state);
  return out;
}

struct TickResult {
  RobotState state;
  std::optional<int> arrived;  // exhibit reached during this tick
  double arrived_after = 0.0;  // seconds into the tick at which it arrived
};

/// Advances autonomous motion by dt seconds. Other modes are unchanged.
inline TickResult tick(RobotState state, double dt, const MotionConfig& cfg) {
  TickResult out;
  if (state.mode != Mode::autonomous || !state.active_plan || !(dt > 0.0)) {
    out.state = std::move(state);
    return out;
  }
  const std::vector<Point> targets = state.active_plan->targets();
  double remaining = dt;
  double elapsed = 0.0;

  // Rotates toward `desired`; returns true once aligned.
  auto rotate_toward = [&](double desired) {
    const double err = normalize_angle(desired - state.pose.theta);
    if (std::abs(err) <= detail::kAngleEps) return true;
    const double need = std::abs(err) / cfg.angular_speed;
    if (need <= remaining) {
      state.pose.theta = normalize_angle(desired);
      remaining -= need;
      elapsed += need;
      return true;
    }
    state.pose.theta = normalize_angle(state.pose.theta + std::copysign(cfg.angular_speed * remaining, err));
    elapsed += remaining;
    remaining = 0.0;
    return false;
  };

  while (true) {
    if (state.next_target < targets.size()) {
      if (!(remaining > 0.0)) break;
      const Point target = targets[state.next_target];
      const Point pos = state.pose.position();
      const double d = distance(pos, target);
      if (d <= detail::kPositionEps) {
        state.pose.x = target.x;
        state.pose.y = target.y;
        ++state.next_target;
        continue;
      }
      if (!rotate_toward(std::atan2(target.y - pos.y, target.x - pos.x))) break;
      const double need = d / cfg.linear_speed;
      if (need <= remaining) {
        state.pose.x = target.x;
        state.pose.y = target.y;
        ++state.next_target;
        remaining -= need;
        elapsed += need;
      } else {
        const double s = cfg.linear_speed * remaining;
        state.pose.x = pos.x + (target.x - pos.x) / d * s;
        state.pose.y = pos.y + (target.y - pos.y) / d * s;
        elapsed += remaining;
        remaining = 0.0;
      }
      continue;
    }
    const double final_heading = state.active_plan->final_heading;
    if (std::abs(normalize_angle(final_heading - state.pose.theta)) > detail::kAngleEps) {
      if (!(remaining > 0.0) || !rotate_toward(final_heading)) break;
    }
    state.pose.theta = normalize_angle(final_heading);
    out.arrived = state.goal_exhibit;
    out.arrived_after = elapsed;
    state.active_plan.reset();
    state.goal_exhibit.reset();
    state.next_target = 0;
    state.mode = Mode::idle;
    break;
  }
  out.state = std::move(state);
  return out;
}

}  // namespace narraguide
