#include "slotrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slotrl {

namespace {

constexpr int kDr[4] = {-1, 1, 0, 0};  // up, down, left, right
constexpr int kDc[4] = {0, 0, -1, 1};

constexpr double kPointActionLimit = 0.2;
constexpr double kPointMinSeparation = 0.15;

[[noreturn]] void bad_task(const std::string& what) {
  throw std::invalid_argument("task: " + what);
}

bool grid_task(const TaskSpec& s) { return s.kind != TaskKind::point_reach; }

int find_present_at(const GridState& s, int r, int c) {
  for (const auto& o : s.objects)
    if (o.present && o.row == r && o.col == c) return o.id;
  return -1;
}

}  // namespace

TaskSpec TaskSpec::named(const std::string& name) {
  if (name == "navigation5x5") return TaskSpec{TaskKind::navigation, 5, 5, 100};
  if (name == "navigation10x10") return TaskSpec{TaskKind::navigation, 10, 8, 200};
  if (name == "pushing_no_agent5x5") return TaskSpec{TaskKind::pushing_no_agent, 5, 5, 100};
  if (name == "point_reach") return TaskSpec{TaskKind::point_reach, 1, 4, 100};
  bad_task("unknown task name '" + name + "'");
}

std::string TaskSpec::name() const {
  switch (kind) {
    case TaskKind::navigation:
      return "navigation" + std::to_string(side) + "x" + std::to_string(side);
    case TaskKind::pushing_no_agent:
      return "pushing_no_agent" + std::to_string(side) + "x" + std::to_string(side);
    case TaskKind::point_reach:
      return "point_reach";
  }
  return "?";
}

ActionSpace TaskSpec::action_space() const {
  if (kind == TaskKind::point_reach)
    return ActionSpace{false, 0, 2, -kPointActionLimit, kPointActionLimit};
  return ActionSpace{true, 4 * movable_count(), 0, 0.0, 0.0};
}

int TaskSpec::type_count() const {
  // Grid objects carry one type per id (target plus distinct movable looks);
  // point_reach distinguishes finger / target / distractor.
  return kind == TaskKind::point_reach ? 3 : object_count;
}

std::uint64_t TaskSpec::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  mix(static_cast<std::uint64_t>(kind));
  mix(static_cast<std::uint64_t>(side));
  mix(static_cast<std::uint64_t>(object_count));
  mix(static_cast<std::uint64_t>(max_steps));
  return h;
}

int GridState::present_count() const {
  int n = 0;
  for (const auto& o : objects) n += o.present ? 1 : 0;
  return n;
}

GridState reset(const TaskSpec& spec, std::uint64_t seed) {
  GridState s;
  s.spec = spec;
  s.step_count = 0;
  Rng rng(seed);

  if (grid_task(spec)) {
    if (spec.object_count > spec.side * spec.side)
      bad_task(std::to_string(spec.object_count) + " objects exceed " +
               std::to_string(spec.side * spec.side) + " cells");
    for (int id = 0; id < spec.object_count; ++id) {
      ObjectState o;
      o.id = id;
      o.type = id;  // id 0 is the target
      for (;;) {
        const int cell = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.side * spec.side)));
        o.row = cell / spec.side;
        o.col = cell % spec.side;
        bool free = true;
        for (const auto& placed : s.objects)
          if (placed.row == o.row && placed.col == o.col) free = false;
        if (free) break;
      }
      s.objects.push_back(o);
    }
    return s;
  }

  // point_reach: id 0 finger, id 1 target, rest distractors, all in the unit square.
  for (int id = 0; id < spec.object_count; ++id) {
    ObjectState o;
    o.id = id;
    o.type = id == kFingerId ? 0 : (id == kPointTargetId ? 1 : 2);
    for (;;) {
      o.x = rng.uniform();
      o.y = rng.uniform();
      bool ok = true;
      for (const auto& placed : s.objects) {
        const double d = std::hypot(placed.x - o.x, placed.y - o.y);
        if (d < kPointMinSeparation) ok = false;
      }
      if (ok) break;
    }
    s.objects.push_back(o);
  }
  return s;
}

DecodedAction decode_action(int index, const TaskSpec& spec) {
  const ActionSpace space = spec.action_space();
  if (!space.discrete) bad_task("decode_action on a continuous task");
  if (index < 0 || index >= space.count)
    throw std::invalid_argument("decode_action: index " + std::to_string(index) +
                                " outside [0," + std::to_string(space.count) + ")");
  static constexpr Direction kDirs[4] = {Direction::up, Direction::down, Direction::left,
                                         Direction::right};
  return DecodedAction{index / 4, kDirs[index % 4]};
}

bool task_complete(const GridState& s) {
  int movables_present = 0;
  for (const auto& o : s.objects)
    if (o.id != 0 && o.present) ++movables_present;
  switch (s.spec.kind) {
    case TaskKind::navigation:
      return movables_present == 0;
    case TaskKind::pushing_no_agent:
      return movables_present <= 1;
    case TaskKind::point_reach: {
      const auto& f = s.objects[kFingerId];
      const auto& t = s.objects[kPointTargetId];
      return std::hypot(f.x - t.x, f.y - t.y) < kContactRadius;
    }
  }
  return false;
}

namespace {

bool episode_done(const GridState& s) {
  if (s.spec.kind == TaskKind::point_reach) {
    if (s.step_count >= s.spec.max_steps) return true;
    const auto& f = s.objects[kFingerId];
    for (const auto& o : s.objects) {
      if (o.id == kFingerId) continue;
      if (std::hypot(f.x - o.x, f.y - o.y) < kContactRadius) return true;
    }
    return false;
  }
  if (s.step_count >= s.spec.max_steps) return true;
  return task_complete(s);
}

StepResult step_grid(const GridState& state, int index) {
  const TaskSpec& spec = state.spec;
  const DecodedAction dec = decode_action(index, spec);
  const int obj_id = dec.movable_rank + 1;
  const int d = static_cast<int>(dec.dir);

  StepResult out;
  out.next = state;
  out.next.step_count = state.step_count + 1;
  GridState& next = out.next;
  double event = 0.0;

  ObjectState& mover = next.objects[obj_id];
  if (mover.present) {
    const int nr = mover.row + kDr[d];
    const int nc = mover.col + kDc[d];
    const bool inside = nr >= 0 && nr < spec.side && nc >= 0 && nc < spec.side;
    if (!inside) {
      event = kCollisionPenalty;
    } else {
      const int hit = find_present_at(state, nr, nc);
      if (spec.kind == TaskKind::navigation) {
        if (hit == -1) {
          mover.row = nr;
          mover.col = nc;
        } else if (hit == kTargetId) {
          mover.present = false;
          event = kTargetReward;
        } else {
          event = kCollisionPenalty;
        }
      } else {  // pushing_no_agent
        if (hit == -1) {
          mover.row = nr;
          mover.col = nc;
        } else if (hit == kTargetId) {
          event = kCollisionPenalty;
        } else {
          // Pushing a movable: look one cell beyond it.
          const int br = nr + kDr[d];
          const int bc = nc + kDc[d];
          const bool binside = br >= 0 && br < spec.side && bc >= 0 && bc < spec.side;
          const int beyond = binside ? find_present_at(state, br, bc) : -2;
          if (!binside || (beyond != -1 && beyond != kTargetId)) {
            event = kCollisionPenalty;
          } else if (beyond == kTargetId) {
            next.objects[hit].present = false;
            mover.row = nr;
            mover.col = nc;
            event = kTargetReward;
          } else {
            next.objects[hit].row = br;
            next.objects[hit].col = bc;
            mover.row = nr;
            mover.col = nc;
          }
        }
      }
    }
  }
  // An action addressing an absent object is a legal no-op.

  out.reward = event + kStepPenalty;
  out.done = episode_done(next);
  return out;
}

StepResult step_point(const GridState& state, const Action& action) {
  if (action.continuous.size() != 2)
    throw std::invalid_argument("step: point_reach expects a 2-dof continuous action");
  StepResult out;
  out.next = state;
  out.next.step_count = state.step_count + 1;
  ObjectState& finger = out.next.objects[kFingerId];
  const double dx = std::clamp(action.continuous[0], -kPointActionLimit, kPointActionLimit);
  const double dy = std::clamp(action.continuous[1], -kPointActionLimit, kPointActionLimit);
  finger.x = std::clamp(finger.x + dx, 0.0, 1.0);
  finger.y = std::clamp(finger.y + dy, 0.0, 1.0);

  const auto& target = out.next.objects[kPointTargetId];
  if (std::hypot(finger.x - target.x, finger.y - target.y) < kContactRadius) {
    out.reward = 1.0;
    out.done = true;
    return out;
  }
  for (const auto& o : out.next.objects) {
    if (o.id == kFingerId || o.id == kPointTargetId) continue;
    if (std::hypot(finger.x - o.x, finger.y - o.y) < kContactRadius) {
      out.reward = 0.0;
      out.done = true;
      return out;
    }
  }
  out.reward = 0.0;
  out.done = out.next.step_count >= state.spec.max_steps;
  return out;
}

}  // namespace

StepResult step(const GridState& state, const Action& action) {
  if (episode_done(state)) throw std::invalid_argument("step: episode already done");
  if (state.spec.kind == TaskKind::point_reach) return step_point(state, action);
  if (action.discrete < 0)
    throw std::invalid_argument("step: grid task expects a discrete action");
  return step_grid(state, action.discrete);
}

// ---------------------------------------------------------------------------
// Independent transition oracle. Written as straight-line rule lookups over an
// occupancy grid, on purpose sharing no logic with step().
// ---------------------------------------------------------------------------

namespace {

std::uint64_t count_enumerable_states(const TaskSpec& spec) {
  const int cells = spec.side * spec.side;
  const int movables = spec.movable_count();
  const int min_present = spec.kind == TaskKind::pushing_no_agent ? 2 : 1;
  std::uint64_t total = 0;
  for (int m = min_present; m <= movables; ++m) {
    // choose(movables, m) subsets, each placed on distinct cells in id order
    std::uint64_t choose = 1;
    for (int i = 0; i < m; ++i) choose = choose * static_cast<std::uint64_t>(movables - i) /
                                         static_cast<std::uint64_t>(i + 1);
    std::uint64_t perm = 1;
    for (int i = 0; i <= m; ++i) perm *= static_cast<std::uint64_t>(cells - i);
    total += choose * perm;
  }
  return total;
}

void enumerate_placements(const TaskSpec& spec, const std::vector<int>& present_ids,
                          std::vector<GridState>* out) {
  const int cells = spec.side * spec.side;
  const int n = static_cast<int>(present_ids.size());
  std::vector<int> cell_of(n, -1);
  std::vector<bool> used(cells, false);

  // Depth-first over ordered distinct-cell assignments.
  int depth = 0;
  std::vector<int> cursor(n, 0);
  while (depth >= 0) {
    if (cursor[depth] >= cells) {
      cursor[depth] = 0;
      --depth;
      if (depth >= 0) {
        used[cell_of[depth]] = false;
        ++cursor[depth];
      }
      continue;
    }
    const int cell = cursor[depth];
    if (used[cell]) {
      ++cursor[depth];
      continue;
    }
    cell_of[depth] = cell;
    used[cell] = true;
    if (depth == n - 1) {
      GridState s;
      s.spec = spec;
      s.step_count = 0;
      for (int id = 0; id < spec.object_count; ++id) {
        ObjectState o;
        o.id = id;
        o.type = id;
        o.present = false;
        s.objects.push_back(o);
      }
      for (int i = 0; i < n; ++i) {
        ObjectState& o = s.objects[present_ids[i]];
        o.present = true;
        o.row = cell_of[i] / spec.side;
        o.col = cell_of[i] % spec.side;
      }
      out->push_back(std::move(s));
      used[cell] = false;
      ++cursor[depth];
    } else {
      ++depth;
    }
  }
}

}  // namespace

std::vector<TransitionRow> enumerate_transitions(const TaskSpec& spec) {
  if (!grid_task(spec)) bad_task("enumerate_transitions needs a grid task");
  const std::uint64_t state_count = count_enumerable_states(spec);
  if (state_count > 1000000ull)
    throw std::runtime_error("enumerate_transitions: " + std::to_string(state_count) +
                             " states exceed the 10^6 guard");

  const int movables = spec.movable_count();
  const int min_present = spec.kind == TaskKind::pushing_no_agent ? 2 : 1;
  std::vector<GridState> states;
  for (std::uint64_t mask = 1; mask < (1ull << movables); ++mask) {
    std::vector<int> present_ids = {kTargetId};
    for (int i = 0; i < movables; ++i)
      if (mask & (1ull << i)) present_ids.push_back(i + 1);
    if (static_cast<int>(present_ids.size()) - 1 < min_present) continue;
    enumerate_placements(spec, present_ids, &states);
  }

  const int side = spec.side;
  const bool pushing = spec.kind == TaskKind::pushing_no_agent;
  std::vector<TransitionRow> table;
  table.reserve(states.size() * static_cast<std::size_t>(4 * movables));

  for (const GridState& s : states) {
    // occupancy map: -1 empty, else object id
    std::vector<int> grid(static_cast<std::size_t>(side * side), -1);
    for (const auto& o : s.objects)
      if (o.present) grid[static_cast<std::size_t>(o.row * side + o.col)] = o.id;

    for (int a = 0; a < 4 * movables; ++a) {
      const int id = a / 4 + 1;
      const int dr = (a % 4 == 0) ? -1 : (a % 4 == 1) ? 1 : 0;
      const int dc = (a % 4 == 2) ? -1 : (a % 4 == 3) ? 1 : 0;

      TransitionRow row;
      row.state = s;
      row.action = a;
      row.next = s;
      row.next.step_count = 1;
      double r = kStepPenalty;

      const ObjectState& o = s.objects[id];
      if (o.present) {
        const int tr = o.row + dr, tc = o.col + dc;
        if (tr < 0 || tr >= side || tc < 0 || tc >= side) {
          r += kCollisionPenalty;
        } else {
          const int occ = grid[static_cast<std::size_t>(tr * side + tc)];
          if (!pushing) {
            if (occ == kTargetId) {
              row.next.objects[id].present = false;
              r += kTargetReward;
            } else if (occ >= 0) {
              r += kCollisionPenalty;
            } else {
              row.next.objects[id].row = tr;
              row.next.objects[id].col = tc;
            }
          } else {
            if (occ == kTargetId) {
              r += kCollisionPenalty;
            } else if (occ >= 0) {
              const int pr = tr + dr, pc = tc + dc;
              if (pr < 0 || pr >= side || pc < 0 || pc >= side) {
                r += kCollisionPenalty;
              } else {
                const int bocc = grid[static_cast<std::size_t>(pr * side + pc)];
                if (bocc == kTargetId) {
                  row.next.objects[occ].present = false;
                  row.next.objects[id].row = tr;
                  row.next.objects[id].col = tc;
                  r += kTargetReward;
                } else if (bocc >= 0) {
                  r += kCollisionPenalty;
                } else {
                  row.next.objects[occ].row = pr;
                  row.next.objects[occ].col = pc;
                  row.next.objects[id].row = tr;
                  row.next.objects[id].col = tc;
                }
              }
            } else {
              row.next.objects[id].row = tr;
              row.next.objects[id].col = tc;
            }
          }
        }
      }

      int left = 0;
      for (const auto& obj : row.next.objects)
        if (obj.id != kTargetId && obj.present) ++left;
      row.reward = r;
      row.done = pushing ? left <= 1 : left == 0;
      if (spec.max_steps <= 1) row.done = true;
      table.push_back(std::move(row));
    }
  }
  return table;
}

OracleCheckResult cross_check_transitions(const TaskSpec& spec) {
  OracleCheckResult out;
  for (const TransitionRow& row : enumerate_transitions(spec)) {
    const StepResult got = step(row.state, Action::index(row.action));
    ++out.pairs;
    const bool ok =
        got.next == row.next && got.reward == row.reward && got.done == row.done;
    if (!ok) {
      ++out.mismatches;
      if (out.first_mismatch.empty())
        out.first_mismatch = "action " + std::to_string(row.action) + ": reward " +
                             std::to_string(got.reward) + " vs " + std::to_string(row.reward);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

constexpr int kCellPx = 8;
constexpr std::uint8_t kBackground[3] = {40, 40, 40};

const std::uint8_t kPalette[10][3] = {
    {220, 60, 60},   // type 0, the target cross
    {70, 120, 220},  {80, 190, 90},   {230, 200, 60}, {200, 90, 200},
    {80, 200, 200},  {230, 140, 60},  {140, 90, 220}, {160, 220, 120},
    {220, 120, 160},
};

}  // namespace

Image render(const GridState& state) {
  if (!grid_task(state.spec)) bad_task("render needs a grid task");
  const int side = state.spec.side;
  Image img;
  img.width = img.height = side * kCellPx;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.rgb[3 * (static_cast<std::size_t>(y) * img.width + x) + ch] = kBackground[ch];

  for (const auto& o : state.objects) {
    if (!o.present) continue;
    const std::uint8_t* color = kPalette[o.type % 10];
    const int px0 = o.col * kCellPx;
    const int py0 = o.row * kCellPx;
    for (int dy = 1; dy < kCellPx - 1; ++dy) {
      for (int dx = 1; dx < kCellPx - 1; ++dx) {
        const bool cross_bar = (dx == 3 || dx == 4) || (dy == 3 || dy == 4);
        if (o.id == kTargetId && !cross_bar) continue;
        const std::size_t off =
            3 * (static_cast<std::size_t>(py0 + dy) * img.width + (px0 + dx));
        img.rgb[off] = color[0];
        img.rgb[off + 1] = color[1];
        img.rgb[off + 2] = color[2];
      }
    }
  }
  return img;
}

}  // namespace slotrl
