#include <doctest.h>

#include <map>

#include "slotrl/encoder.hpp"

using namespace slotrl;

TEST_CASE("grid encoding layout") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  CHECK(feature_dim(spec) == 5 + 5 + 5 + 1);
  GridState s = reset(spec, 2);
  s.objects[1].row = 0;
  s.objects[1].col = 0;
  // keep cells distinct for the test
  s.objects[0].row = 4;
  s.objects[0].col = 4;
  FactoredState z = encode(s);
  CHECK(z.k == 5);
  CHECK(z.d == 16);
  CHECK(z.at(1, 0) == 1.0);  // row one-hot
  for (int j = 1; j < 5; ++j) CHECK(z.at(1, j) == 0.0);
  CHECK(z.at(1, 5) == 1.0);  // col one-hot
  CHECK(z.at(1, 10 + 1) == 1.0);  // type block, type == id
  CHECK(z.at(1, 15) == 1.0);      // presence

  s.objects[3].present = false;
  FactoredState z2 = encode(s);
  for (int j = 0; j < z2.d; ++j) CHECK(z2.at(3, j) == 0.0);
}

TEST_CASE("point reach encoding layout") {
  TaskSpec spec = TaskSpec::named("point_reach");
  CHECK(feature_dim(spec) == 2 + 3 + 1);
  GridState s = reset(spec, 1);
  FactoredState z = encode(s);
  CHECK(z.k == 4);
  CHECK(z.at(0, 0) == s.objects[0].x);
  CHECK(z.at(0, 1) == s.objects[0].y);
  CHECK(z.at(0, 2) == 1.0);  // finger type
  CHECK(z.at(1, 3) == 1.0);  // target type
  CHECK(z.at(2, 4) == 1.0);  // distractor type
  CHECK(z.at(3, 5) == 1.0);  // presence
}

TEST_CASE("encoding is injective on enumerable states") {
  TaskSpec spec{TaskKind::navigation, 3, 2, 50};
  std::map<std::vector<double>, GridState> seen;
  for (const auto& row : enumerate_transitions(spec)) {
    auto [it, fresh] = seen.emplace(encode(row.state).values, row.state);
    if (!fresh) CHECK(it->second == row.state);
  }
  CHECK(seen.size() == 72);
}

TEST_CASE("slot binding is stable across an episode") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  Rng rng(4);
  GridState s = reset(spec, 12);
  for (int t = 0; t < 120; ++t) {
    FactoredState z = encode(s);
    for (const auto& o : s.objects) {
      if (!o.present) continue;
      CHECK(z.at(o.id, 2 * spec.side + o.type) == 1.0);  // slot id == object id
      CHECK(z.at(o.id, o.row) == 1.0);
    }
    StepResult r = step(s, Action::index(static_cast<int>(rng.below(16))));
    if (r.done) break;
    s = r.next;
  }
}

TEST_CASE("encode_batch stacks in order and rejects mixed specs") {
  TaskSpec spec = TaskSpec::named("navigation5x5");
  std::vector<GridState> states = {reset(spec, 1), reset(spec, 2), reset(spec, 3)};
  Tensor batch = encode_batch(states);
  CHECK(batch.shape == std::vector<std::size_t>{3, 5, 16});

  Tensor single = encode_batch(std::span<const GridState>(states.data(), 1));
  FactoredState direct = encode(states[0]);
  for (std::size_t i = 0; i < direct.values.size(); ++i)
    CHECK(single.data[i] == direct.values[i]);

  std::vector<GridState> permuted = {states[2], states[0], states[1]};
  Tensor batch2 = encode_batch(permuted);
  for (int i = 0; i < 80; ++i) {
    CHECK(batch2.data[i] == batch.data[2 * 80 + i]);
    CHECK(batch2.data[80 + i] == batch.data[i]);
  }

  std::vector<GridState> mixed = {states[0], reset(TaskSpec::named("navigation10x10"), 1)};
  CHECK_THROWS_AS(encode_batch(mixed), std::invalid_argument);
}
