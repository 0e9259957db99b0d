#include <doctest.h>

#include <cmath>

#include "slotrl/gradcheck.hpp"
#include "slotrl/graph.hpp"

using namespace slotrl;

TEST_CASE("primitive forward values") {
  Graph g;
  NodeId x = g.constant(Tensor::vec({-1.0, 2.0}));
  CHECK(g.evaluate(g.relu(x), {}).data == std::vector<double>{0.0, 2.0});

  Graph g2;
  NodeId c = g2.constant(Tensor::vec({3.7, 3.7, 3.7}));
  const Tensor& ln = g2.evaluate(g2.layer_norm(c), {});
  for (double v : ln.data) CHECK(std::abs(v) < 1e-12);  // zero variance guarded by epsilon

  Graph g3;
  NodeId z = g3.constant(Tensor::vec({0.0, 0.0}));
  const Tensor& sm = g3.evaluate(g3.softmax(z), {});
  CHECK(sm.data[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sm.data[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("d(x^2)/dx at x=3 is 6") {
  Graph g;
  NodeId x = g.input("x", {});
  NodeId y = g.square(x);
  Tensor xv = Tensor::scalar(3.0);
  Bindings b{{"x", &xv}};
  g.evaluate(y, b);
  GradMap grads = g.gradient(y, {"x"});
  CHECK(grads.at("x").item() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("log-softmax gradient sums to zero across classes") {
  // loss: selected log-probability minus the uniform-weighted mean
  Graph g;
  NodeId x = g.input("x", {5});
  NodeId lp = g.log_softmax(x);
  NodeId sel = g.slice_cols(g.reshape(lp, {1, 5}), 2, 1);
  NodeId loss = g.sub(g.sum_all(sel), g.scale(g.sum_all(lp), 1.0 / 5.0));
  Tensor xv = Tensor::vec({0.3, -1.2, 0.8, 2.0, -0.5});
  Bindings b{{"x", &xv}};
  g.evaluate(loss, b);
  GradMap grads = g.gradient(loss, {"x"});
  double sum = 0.0;
  for (double v : grads.at("x").data) sum += v;
  CHECK(std::abs(sum) < 1e-14);
}

TEST_CASE("evaluate is deterministic and backward does not touch forward values") {
  Graph g;
  NodeId x = g.input("x", {4, 3});
  NodeId w = g.input("w", {3, 2});
  NodeId out = g.mean_all(g.tanh_(g.matmul(x, w)));
  Tensor xv({4, 3});
  Tensor wv({3, 2});
  Rng rng(5);
  for (auto& v : xv.data) v = rng.uniform(-1, 1);
  for (auto& v : wv.data) v = rng.uniform(-1, 1);
  Bindings b{{"x", &xv}, {"w", &wv}};
  const Tensor first = g.evaluate(out, b);
  const Tensor again = g.evaluate(out, b);
  CHECK(first.data == again.data);  // bitwise

  const Tensor forward_snapshot = g.value(out);
  g.gradient(out, {"w"});
  CHECK(g.value(out).data == forward_snapshot.data);
}

TEST_CASE("shape errors name the primitive and both shapes") {
  Graph g;
  NodeId a = g.constant(Tensor({2, 3}));
  NodeId b = g.constant(Tensor({4, 5}));
  try {
    g.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
}

TEST_CASE("gradient preconditions") {
  Graph g;
  NodeId x = g.input("x", {3});
  NodeId y = g.relu(x);
  Tensor xv = Tensor::vec({1, 2, 3});
  Bindings b{{"x", &xv}};
  g.evaluate(y, b);
  CHECK_THROWS_AS(g.gradient(y, {"x"}), std::invalid_argument);  // non-scalar output
  NodeId s = g.sum_all(y);
  g.evaluate(s, b);
  CHECK_THROWS_AS(g.gradient(s, {"nope"}), std::invalid_argument);
  GradMap grads = g.gradient(s, {"x"});
  CHECK(grads.at("x").data == std::vector<double>{1, 1, 1});

  Graph g2;
  g2.input("x", {2});
  CHECK_THROWS_AS(g2.evaluate(0, {}), std::invalid_argument);  // unbound input
}

TEST_CASE("clamp composite clips and passes gradient inside the range") {
  Graph g;
  NodeId x = g.input("x", {4});
  NodeId y = g.clamp(x, -1.0, 2.0);
  NodeId s = g.sum_all(y);
  Tensor xv = Tensor::vec({-3.0, 0.5, 1.9, 7.0});
  Bindings b{{"x", &xv}};
  g.evaluate(s, b);
  CHECK(g.value(y).data == std::vector<double>{-1.0, 0.5, 1.9, 2.0});
  GradMap grads = g.gradient(s, {"x"});
  CHECK(grads.at("x").data == std::vector<double>{0.0, 1.0, 1.0, 0.0});
}

TEST_CASE("stop_grad blocks and broadcast_scalar spreads") {
  Graph g;
  NodeId x = g.input("x", {});
  NodeId spread = g.broadcast_scalar(x, {2, 3});
  NodeId blocked = g.stop_grad(spread);
  NodeId loss = g.add(g.sum_all(spread), g.sum_all(blocked));
  Tensor xv = Tensor::scalar(1.25);
  Bindings b{{"x", &xv}};
  CHECK(g.evaluate(loss, b).item() == doctest::Approx(15.0));
  GradMap grads = g.gradient(loss, {"x"});
  CHECK(grads.at("x").item() == doctest::Approx(6.0));  // only the live branch
}

TEST_CASE("gradient suite smoke run stays within tolerance") {
  CHECK(run_gradient_suite(3, 17, false) < 1e-4);
}
