#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "slotrl/rng.hpp"

namespace slotrl {

enum class TaskKind { navigation, pushing_no_agent, point_reach };

enum class Direction { up, down, left, right };

struct ActionSpace {
  bool discrete = true;
  int count = 0;      // discrete
  int dim = 0;        // continuous
  double low = 0.0, high = 0.0;
};

struct TaskSpec {
  TaskKind kind = TaskKind::navigation;
  int side = 5;           // grid rows == cols; unit square for point_reach
  int object_count = 5;   // K, target included
  int max_steps = 100;

  static TaskSpec named(const std::string& name);
  std::string name() const;

  int movable_count() const { return object_count - 1; }
  ActionSpace action_space() const;
  int type_count() const;
  std::uint64_t hash() const;

  bool operator==(const TaskSpec& o) const = default;
};

// Either a discrete action index or a continuous displacement.
struct Action {
  int discrete = -1;
  std::vector<double> continuous;

  static Action index(int i) { return Action{i, {}}; }
  static Action move(std::vector<double> v) { return Action{-1, std::move(v)}; }
  bool operator==(const Action& o) const = default;
};

struct ObjectState {
  int id = 0;
  int type = 0;
  int row = 0, col = 0;   // grid tasks
  double x = 0.0, y = 0.0;  // point_reach
  bool present = true;

  bool operator==(const ObjectState& o) const = default;
};

// Full symbolic state of one task instance. Object ids are stable: id 0 is
// always the target for grid tasks (the finger for point_reach, target id 1).
struct GridState {
  TaskSpec spec;
  std::vector<ObjectState> objects;
  int step_count = 0;

  const ObjectState& object(int id) const { return objects[id]; }
  int present_count() const;
  bool operator==(const GridState& o) const = default;
};

struct StepResult {
  GridState next;
  double reward = 0.0;
  bool done = false;
};

struct DecodedAction {
  int movable_rank = 0;
  Direction dir = Direction::up;
};

constexpr double kStepPenalty = -0.01;
constexpr double kCollisionPenalty = -0.1;
constexpr double kTargetReward = 1.0;
constexpr double kContactRadius = 0.05;
constexpr int kTargetId = 0;     // grid tasks
constexpr int kFingerId = 0;     // point_reach
constexpr int kPointTargetId = 1;

GridState reset(const TaskSpec& spec, std::uint64_t seed);
DecodedAction decode_action(int index, const TaskSpec& spec);
StepResult step(const GridState& state, const Action& action);

// True if the episode ended by completing the task rather than by timeout.
bool task_complete(const GridState& state);

struct TransitionRow {
  GridState state;
  int action = 0;
  GridState next;
  double reward = 0.0;
  bool done = false;
};

// Exhaustive transition table from an independent straight-line rule
// implementation; the test oracle for step(). Grid tasks only.
std::vector<TransitionRow> enumerate_transitions(const TaskSpec& spec);

struct OracleCheckResult {
  std::size_t pairs = 0;
  std::size_t mismatches = 0;
  std::string first_mismatch;
};

// Runs step() against every row of enumerate_transitions.
OracleCheckResult cross_check_transitions(const TaskSpec& spec);

struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::array<std::uint8_t, 3> pixel(int x, int y) const {
    const std::size_t o = 3 * (static_cast<std::size_t>(y) * width + x);
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }
};

Image render(const GridState& state);

}  // namespace slotrl
