#include <doctest.h>

#include <set>
#include <stdexcept>

#include "slotrl/env.hpp"

using namespace slotrl;

namespace {

GridState make_state(const TaskSpec& spec, const std::vector<std::pair<int, int>>& cells,
                     const std::vector<bool>& present = {}) {
  GridState s;
  s.spec = spec;
  for (int id = 0; id < spec.object_count; ++id) {
    ObjectState o;
    o.id = id;
    o.type = id;
    o.row = cells[id].first;
    o.col = cells[id].second;
    o.present = present.empty() ? true : present[id];
    s.objects.push_back(o);
  }
  return s;
}

}  // namespace

TEST_CASE("task catalog matches the published sizes") {
  TaskSpec nav5 = TaskSpec::named("navigation5x5");
  CHECK(nav5.side == 5);
  CHECK(nav5.object_count == 5);
  CHECK(nav5.action_space().count == 16);
  TaskSpec nav10 = TaskSpec::named("navigation10x10");
  CHECK(nav10.side == 10);
  CHECK(nav10.object_count == 8);
  CHECK(nav10.movable_count() == 7);
  CHECK(nav10.action_space().count == 28);
  TaskSpec push = TaskSpec::named("pushing_no_agent5x5");
  CHECK(push.side == 5);
  CHECK(push.object_count == 5);
  CHECK(push.action_space().count == 16);
  TaskSpec pr = TaskSpec::named("point_reach");
  CHECK_FALSE(pr.action_space().discrete);
  CHECK(pr.action_space().dim == 2);
  CHECK(pr.action_space().low == -0.2);
  CHECK(pr.action_space().high == 0.2);
  CHECK_THROWS_AS(TaskSpec::named("frogger"), std::invalid_argument);
}

TEST_CASE("reset places objects on distinct cells with one target") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  for (std::uint64_t seed : {0ull, 1ull, 17ull, 123456ull}) {
    GridState s = reset(spec, seed);
    CHECK(s.present_count() == 5);
    std::set<std::pair<int, int>> cells;
    int targets = 0;
    for (const auto& o : s.objects) {
      cells.insert({o.row, o.col});
      if (o.id == kTargetId) ++targets;
    }
    CHECK(cells.size() == 5);
    CHECK(targets == 1);
    CHECK(reset(spec, seed) == s);  // determinism
  }
  GridState big = reset(TaskSpec::named("navigation10x10"), 9);
  CHECK(big.present_count() == 8);

  TaskSpec tiny{TaskKind::navigation, 2, 5, 10};
  CHECK_THROWS_AS(reset(tiny, 0), std::invalid_argument);
}

TEST_CASE("action decoding is rank*4 + direction") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  CHECK(decode_action(0, spec).movable_rank == 0);
  CHECK(decode_action(0, spec).dir == Direction::up);
  CHECK(decode_action(5, spec).movable_rank == 1);
  CHECK(decode_action(5, spec).dir == Direction::down);
  TaskSpec big = TaskSpec::named("navigation10x10");
  CHECK(decode_action(27, big).movable_rank == 6);
  CHECK(decode_action(27, big).dir == Direction::right);
  CHECK_THROWS_AS(decode_action(16, spec), std::invalid_argument);
  CHECK_THROWS_AS(decode_action(-1, spec), std::invalid_argument);
}

TEST_CASE("navigation step rules") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  // target at (2,2); movable 1 at (2,1), movable 2 at (0,0), rest parked far
  GridState s = make_state(spec, {{2, 2}, {2, 1}, {0, 0}, {4, 0}, {4, 4}});

  SUBCASE("move into a free cell") {
    StepResult r = step(s, Action::index(0));  // movable 1 up -> (1,1)
    CHECK(r.reward == doctest::Approx(-0.01));
    CHECK(r.next.object(1).row == 1);
    CHECK_FALSE(r.done);
  }
  SUBCASE("move outward at the boundary") {
    StepResult r = step(s, Action::index(4 + 0));  // movable 2 up from (0,0)
    CHECK(r.reward == doctest::Approx(-0.11));
    CHECK(r.next.object(2).row == 0);
    CHECK(r.next.object(2).col == 0);
  }
  SUBCASE("move onto the target") {
    StepResult r = step(s, Action::index(3));  // movable 1 right -> target
    CHECK(r.reward == doctest::Approx(0.99));
    CHECK_FALSE(r.next.object(1).present);
    CHECK_FALSE(r.done);
  }
  SUBCASE("move into another movable") {
    GridState s2 = make_state(spec, {{2, 2}, {2, 1}, {2, 0}, {4, 0}, {4, 4}});
    StepResult r = step(s2, Action::index(4 + 3));  // movable 2 right into movable 1
    CHECK(r.reward == doctest::Approx(-0.11));
    CHECK(r.next == [&] {
      GridState c = s2;
      c.step_count = 1;
      return c;
    }());
  }
  SUBCASE("last movable disappearing ends the episode") {
    GridState s3 = make_state(spec, {{2, 2}, {2, 1}, {0, 0}, {4, 0}, {4, 4}},
                              {true, true, false, false, false});
    StepResult r = step(s3, Action::index(3));
    CHECK(r.reward == doctest::Approx(0.99));
    CHECK(r.done);
    CHECK(task_complete(r.next));
  }
  SUBCASE("action addressing an absent object is a no-op") {
    GridState s4 = make_state(spec, {{2, 2}, {2, 1}, {0, 0}, {4, 0}, {4, 4}},
                              {true, false, true, true, true});
    StepResult r = step(s4, Action::index(1));  // movable 1 is absent
    CHECK(r.reward == doctest::Approx(-0.01));
    GridState expect = s4;
    expect.step_count = 1;
    CHECK(r.next == expect);
  }
  SUBCASE("timeout ends the episode without success") {
    GridState s5 = s;
    s5.step_count = spec.max_steps - 1;
    StepResult r = step(s5, Action::index(0));
    CHECK(r.done);
    CHECK_FALSE(task_complete(r.next));
    CHECK_THROWS_AS(step(r.next, Action::index(0)), std::invalid_argument);
  }
}

TEST_CASE("pushing step rules") {
  TaskSpec spec = TaskSpec::named("pushing_no_agent5x5");
  // target (0,4); controlled movable 1 at (2,1); movable 2 at (2,2)
  SUBCASE("push with a free cell beyond") {
    GridState s = make_state(spec, {{0, 4}, {2, 1}, {2, 2}, {4, 0}, {4, 4}});
    StepResult r = step(s, Action::index(3));  // movable 1 right
    CHECK(r.reward == doctest::Approx(-0.01));
    CHECK(r.next.object(1).col == 2);
    CHECK(r.next.object(2).col == 3);  // both advance
  }
  SUBCASE("push a movable onto the target") {
    GridState s = make_state(spec, {{2, 3}, {2, 1}, {2, 2}, {4, 0}, {4, 4}});
    StepResult r = step(s, Action::index(3));
    CHECK(r.reward == doctest::Approx(0.99));
    CHECK_FALSE(r.next.object(2).present);
    CHECK(r.next.object(1).col == 2);  // controlled object advances
  }
  SUBCASE("push against the boundary") {
    GridState s = make_state(spec, {{0, 0}, {2, 3}, {2, 4}, {4, 0}, {4, 4}});
    StepResult r = step(s, Action::index(3));
    CHECK(r.reward == doctest::Approx(-0.11));
    CHECK(r.next.object(1).col == 3);
    CHECK(r.next.object(2).col == 4);
  }
  SUBCASE("chains of two block the move") {
    GridState s = make_state(spec, {{0, 0}, {2, 1}, {2, 2}, {2, 3}, {4, 4}});
    StepResult r = step(s, Action::index(3));
    CHECK(r.reward == doctest::Approx(-0.11));
    CHECK(r.next.object(1).col == 1);
  }
  SUBCASE("controlled object cannot enter the target") {
    GridState s = make_state(spec, {{2, 2}, {2, 1}, {0, 0}, {4, 0}, {4, 4}});
    StepResult r = step(s, Action::index(3));
    CHECK(r.reward == doctest::Approx(-0.11));
    CHECK(r.next.object(1).col == 1);
  }
  SUBCASE("episode ends with target plus one movable") {
    GridState s = make_state(spec, {{2, 3}, {2, 1}, {2, 2}, {4, 0}, {4, 4}},
                             {true, true, true, false, false});
    StepResult r = step(s, Action::index(3));  // pushes movable 2 onto target
    CHECK(r.done);
    CHECK(task_complete(r.next));
  }
}

TEST_CASE("point reach dynamics") {
  TaskSpec spec = TaskSpec::named("point_reach");
  GridState s = reset(spec, 3);
  CHECK(s.objects.size() == 4);

  SUBCASE("touching the target rewards and ends") {
    GridState t = s;
    t.objects[kFingerId].x = t.objects[kPointTargetId].x - 0.06;
    t.objects[kFingerId].y = t.objects[kPointTargetId].y;
    StepResult r = step(t, Action::move({0.04, 0.0}));
    CHECK(r.reward == doctest::Approx(1.0));
    CHECK(r.done);
    CHECK(task_complete(r.next));
  }
  SUBCASE("touching a distractor ends without reward") {
    GridState t = s;
    t.objects[kFingerId].x = t.objects[2].x - 0.06;
    t.objects[kFingerId].y = t.objects[2].y;
    StepResult r = step(t, Action::move({0.04, 0.0}));
    CHECK(r.reward == 0.0);
    CHECK(r.done);
    CHECK_FALSE(task_complete(r.next));
  }
  SUBCASE("actions clip to bounds and the arena") {
    GridState t = s;
    t.objects[kFingerId].x = 0.95;
    t.objects[kFingerId].y = 0.5;
    t.objects[kPointTargetId].x = 0.1;
    t.objects[kPointTargetId].y = 0.1;
    t.objects[2].x = 0.5;
    t.objects[3].y = 0.9;
    StepResult r = step(t, Action::move({5.0, 0.0}));
    CHECK(r.next.objects[kFingerId].x == doctest::Approx(1.0));  // +0.2 then clamp
    CHECK_THROWS_AS(step(t, Action::index(0)), std::invalid_argument);
  }
}

TEST_CASE("transition table is exhaustive and matches step") {
  TaskSpec spec{TaskKind::navigation, 3, 2, 50};
  std::vector<TransitionRow> table = enumerate_transitions(spec);
  CHECK(table.size() == 9 * 8 * 4);
  for (const auto& row : table) {
    const bool known = row.reward == -0.01 || row.reward == -0.11 || row.reward == 0.99;
    CHECK(known);
  }
  OracleCheckResult res = cross_check_transitions(spec);
  CHECK(res.pairs == table.size());
  CHECK(res.mismatches == 0);

  CHECK_THROWS_AS(enumerate_transitions(TaskSpec::named("navigation5x5")), std::runtime_error);
  CHECK_THROWS_AS(enumerate_transitions(TaskSpec::named("point_reach")), std::invalid_argument);
}

TEST_CASE("step is pure and object count never increases") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  Rng rng(11);
  GridState s = reset(spec, 77);
  for (int i = 0; i < 300; ++i) {
    const Action a = Action::index(static_cast<int>(rng.below(16)));
    StepResult r1 = step(s, a);
    StepResult r2 = step(s, a);
    CHECK(r1.next == r2.next);
    CHECK(r1.reward == r2.reward);
    CHECK(r1.next.present_count() <= s.present_count());
    CHECK(r1.next.object(kTargetId).present);
    CHECK(r1.next.object(kTargetId).row == s.object(kTargetId).row);
    if (r1.done) {
      s = reset(spec, rng.next_u64());
    } else {
      s = r1.next;
    }
  }
}

TEST_CASE("navigation episode returns stay inside the rule bounds") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  Rng rng(23);
  for (int ep = 0; ep < 20; ++ep) {
    GridState s = reset(spec, rng.next_u64());
    double ret = 0.0;
    for (;;) {
      StepResult r = step(s, Action::index(static_cast<int>(rng.below(16))));
      ret += r.reward;
      if (r.done) break;
      s = r.next;
    }
    CHECK(ret <= 4.0 * 1.0 - 4 * 0.01);
    CHECK(ret >= spec.max_steps * -0.11);
  }
}

TEST_CASE("render draws deterministic colored glyphs") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  GridState s = reset(spec, 5);
  Image img = render(s);
  CHECK(img.width == 40);
  CHECK(img.height == 40);
  Image again = render(s);
  CHECK(img.rgb == again.rgb);

  // empty-cell pixels keep the background color
  std::set<int> used_cells;
  for (const auto& o : s.objects) used_cells.insert(o.row * 5 + o.col);
  int empty_cell = -1;
  for (int c = 0; c < 25; ++c)
    if (!used_cells.count(c)) {
      empty_cell = c;
      break;
    }
  const int px = (empty_cell % 5) * 8 + 4, py = (empty_cell / 5) * 8 + 4;
  auto bg = img.pixel(px, py);
  CHECK(bg[0] == 40);
  CHECK(bg[1] == 40);
  CHECK(bg[2] == 40);

  // one distinct color region per present object
  std::set<std::array<std::uint8_t, 3>> colors;
  for (const auto& o : s.objects)
    colors.insert(img.pixel(o.col * 8 + 4, o.row * 8 + 4));
  CHECK(colors.size() == 5);

  CHECK_THROWS_AS(render(reset(TaskSpec::named("point_reach"), 0)), std::invalid_argument);
}
