#include <doctest.h>

#include <cstdio>

#include "slotrl/replay.hpp"

using namespace slotrl;

namespace {

TransitionRecord make_record(double tag) {
  TransitionRecord r;
  r.z.k = 2;
  r.z.d = 3;
  r.z.values = {tag, 0, 0, 0, 0, 1};
  r.z_next = r.z;
  r.z_next.values[1] = tag + 0.5;
  r.action = Action::index(static_cast<int>(tag) % 4);
  r.reward = -0.01 * tag;
  r.done = static_cast<int>(tag) % 5 == 0;
  return r;
}

}  // namespace

TEST_CASE("push, size, fifo eviction") {
  ReplayBuffer rb(2);
  CHECK(rb.size() == 0);
  rb.push(make_record(1));
  CHECK(rb.size() == 1);
  rb.push(make_record(2));
  rb.push(make_record(3));
  CHECK(rb.size() == 2);
  CHECK(rb.at(0) == make_record(2));
  CHECK(rb.at(1) == make_record(3));

  ReplayBuffer rb2(16);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    rb2.push(make_record(i));
    CHECK(rb2.size() <= rb2.capacity());
  }
  CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("sampling is uniform with replacement and deterministic per seed") {
  ReplayBuffer rb(100);
  rb.push(make_record(7));
  Rng one(3);
  auto single = rb.sample(1, one);
  CHECK(single[0] == make_record(7));

  for (int i = 1; i < 10; ++i) rb.push(make_record(i * 11));
  Rng a(5), b(5);
  auto batch_a = rb.sample(8, a);
  auto batch_b = rb.sample(8, b);
  CHECK(batch_a == batch_b);

  // sampled records are bitwise equal to stored records
  for (const auto& rec : batch_a) {
    bool found = false;
    for (std::size_t i = 0; i < rb.size(); ++i)
      if (rb.at(i) == rec) found = true;
    CHECK(found);
  }

  CHECK_THROWS_AS(rb.sample(11, a), std::runtime_error);

  // chi-square uniformity over 1e5 draws from 10 records (9 dof, p > 0.01)
  Rng r(11);
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto s = rb.sample(1, r);
    const double tag = s[0].z.values[0];
    ++counts[tag == 7 ? 0 : static_cast<int>(tag / 11)];
  }
  const double expect = draws / 10.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 21.666);  // chi-square(9) critical value at p = 0.01
}

TEST_CASE("binary dump and load round-trips with a spec hash guard") {
  const std::string path = "/tmp/slotrl_replay_test.bin";
  ReplayBuffer rb(8);
  for (int i = 0; i < 12; ++i) rb.push(make_record(i));  // wraps the ring
  rb.save(path, 0xABCDu);

  ReplayBuffer loaded = ReplayBuffer::load(path, 0xABCDu);
  CHECK(loaded.size() == rb.size());
  for (std::size_t i = 0; i < rb.size(); ++i) CHECK(loaded.at(i) == rb.at(i));

  CHECK_THROWS_AS(ReplayBuffer::load(path, 0x1111u), std::runtime_error);
  CHECK_THROWS_AS(ReplayBuffer::load("/tmp/slotrl_nonexistent.bin", 0xABCDu),
                  std::runtime_error);
  std::remove(path.c_str());
}
