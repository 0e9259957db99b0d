#include <doctest.h>

#include <cmath>

#include "slotrl/agent.hpp"
#include "slotrl/trainer.hpp"

using namespace slotrl;

namespace {

const TaskSpec kGrid3{TaskKind::navigation, 3, 2, 50};  // K=2, 4 actions

Agent make_agent(const TaskSpec& spec, int hidden, CriticMode mode = CriticMode::composed,
                 std::uint64_t seed = 1, double alpha_init = 1.0) {
  AgentConfig cfg;
  cfg.hidden_width = hidden;
  cfg.batch_size = 4;
  cfg.critic_mode = mode;
  cfg.alpha_init = alpha_init;
  Rng init(seed);
  return Agent(spec, cfg, init);
}

std::vector<TransitionRecord> env_batch(const TaskSpec& spec, int count, std::uint64_t seed) {
  Rng rng(seed);
  const ActionSpace space = spec.action_space();
  std::vector<TransitionRecord> out;
  GridState s = reset(spec, rng.next_u64());
  while (static_cast<int>(out.size()) < count) {
    Action a;
    if (space.discrete) {
      a = Action::index(static_cast<int>(rng.below(space.count)));
    } else {
      a = Action::move({rng.uniform(space.low, space.high), rng.uniform(space.low, space.high)});
    }
    StepResult r = step(s, a);
    out.push_back({encode(s), a, r.reward, encode(r.next), r.done});
    s = r.done ? reset(spec, rng.next_u64()) : r.next;
  }
  return out;
}

void zero_prefix(ParamStore& ps, const std::string& prefix) {
  for (auto& [name, tensor] : ps) {
    if (name.rfind(prefix, 0) == 0)
      for (auto& v : tensor.data) v = 0.0;
  }
}

void set_param(ParamStore& ps, const std::string& name, const std::vector<double>& v) {
  Tensor& t = ps.get(name);
  REQUIRE(t.data.size() == v.size());
  t.data = v;
}

double max_abs(const GradMap& grads) {
  double m = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("target entropy defaults follow the task") {
  Agent nav = make_agent(TaskSpec::named("navigation5x5"), 8);
  CHECK(nav.target_entropy() == doctest::Approx(0.6 * std::log(16.0)).epsilon(1e-12));
  CHECK(nav.target_entropy() == doctest::Approx(1.6636).epsilon(1e-3));
  Agent nav10 = make_agent(TaskSpec::named("navigation10x10"), 8);
  CHECK(nav10.target_entropy() == doctest::Approx(0.6 * std::log(28.0)).epsilon(1e-12));
  CHECK(nav10.target_entropy() == doctest::Approx(2.0).epsilon(2e-3));
  Agent pr = make_agent(TaskSpec::named("point_reach"), 8);
  CHECK(pr.target_entropy() == -2.0);
  CHECK(pr.config().gamma == 0.99);
  CHECK(pr.config().tau == 0.005);
}

TEST_CASE("composed critic with gamma 0 returns the reward model output") {
  AgentConfig cfg;
  cfg.hidden_width = 8;
  cfg.gamma = 0.0;
  Rng init(3);
  Agent agent(kGrid3, cfg, init);
  const FactoredState z = encode(reset(kGrid3, 5));
  for (int a = 0; a < 4; ++a) {
    const double q = agent.critic_q(z, Action::index(a), 1, false);
    CHECK(q == agent.predict_reward(z, Action::index(a)));  // exact
  }
}

TEST_CASE("zero value head reduces the critic to the reward model") {
  Agent agent = make_agent(kGrid3, 8);
  zero_prefix(agent.params(), "value1/");
  const FactoredState z = encode(reset(kGrid3, 6));
  CHECK(agent.critic_q(z, Action::index(2), 1, false) ==
        doctest::Approx(agent.predict_reward(z, Action::index(2))).epsilon(1e-14));
}

TEST_CASE("hand-sized composed critic matches straight-line arithmetic") {
  // K=2, D=1, all nets all-ones affine maps, z=(0.3,-0.2), a=(1,0), gamma=.99:
  //   R = mean(2.4, -0.1) = 1.15; z' = (2.7, -0.3);
  //   V(z') = mean(2.7+2.4, -0.3+2.4) = 3.6; Q = 1.15 + 0.99*3.6 = 4.714
  GnnNets nets;
  nets.k = 2;
  nets.d = 1;
  nets.a_obj = 1;
  nets.width = 1;
  nets.discrete = true;
  nets.n_actions = 4;
  nets.tr_edge = {3, {}, 1, false};
  nets.tr_node = {3, {}, 1, false};
  nets.rw_edge = {3, {}, 1, false};
  nets.rw_node = {3, {}, 1, false};
  nets.rw_head = {1, {}, 1, false};
  nets.v_edge = {2, {}, 1, false};
  nets.v_node = {2, {}, 1, false};
  nets.v_head = {1, {}, 1, false};

  ParamStore ps;
  for (const char* p : {"transition/edge", "transition/node", "reward/edge", "reward/node"})
    ps.add(std::string(p) + "/wo", Tensor({3, 1}, 1.0));
  for (const char* p : {"value1/edge", "value1/node"})
    ps.add(std::string(p) + "/wo", Tensor({2, 1}, 1.0));
  ps.add("reward/head/wo", Tensor({1, 1}, 1.0));
  ps.add("value1/head/wo", Tensor({1, 1}, 1.0));
  for (const char* p :
       {"transition/edge", "transition/node", "reward/edge", "reward/node", "reward/head",
        "value1/edge", "value1/node", "value1/head"})
    ps.add(std::string(p) + "/bo", Tensor({1}));

  Graph g;
  gnn::ParamNodes p(g, ps);
  NodeId z = g.constant(Tensor::matrix(2, 1, {0.3, -0.2}));
  NodeId a = g.constant(Tensor::matrix(2, 1, {1.0, 0.0}));
  NodeId dz = transition_delta(g, p, nets, z, a, 1);
  NodeId zp = g.add(z, dz);
  NodeId rhat = reward_scalar(g, p, nets, z, a, 1);
  NodeId v = value_scalar(g, p, nets, "value1", zp, 1);
  NodeId q = g.add(rhat, g.scale(v, 0.99));
  Bindings b;
  for (const auto& name : p.used()) b[name] = &ps.get(name);
  CHECK(g.evaluate(q, b).data[0] == doctest::Approx(4.714).epsilon(1e-14));
}

TEST_CASE("soft value of a uniform policy over a constant critic is c + alpha*ln(n)") {
  Agent agent = make_agent(kGrid3, 8, CriticMode::composed, 7, /*alpha_init=*/0.7);
  zero_prefix(agent.params(), "reward/");
  zero_prefix(agent.params(), "value1/");
  zero_prefix(agent.params(), "value2/");
  zero_prefix(agent.params(), "actor/pi");
  const double c = -0.35;
  agent.params().get("reward/head/bo").data[0] = c;

  const FactoredState z = encode(reset(kGrid3, 9));
  const double v = agent.soft_value_discrete(z);
  CHECK(std::abs(v - (c + 0.7 * std::log(4.0))) < 1e-12);

  // alpha = 0 limit: V = pi^T min(Q1, Q2)
  agent.params().get("log_alpha").data[0] = std::log(1e-300);
  CHECK(agent.soft_value_discrete(z) == doctest::Approx(c).epsilon(1e-12));
}

TEST_CASE("discrete soft value matches per-action arithmetic of the composed critic") {
  Agent agent = make_agent(kGrid3, 10, CriticMode::composed, 21, 0.9);
  const FactoredState z = encode(reset(kGrid3, 31));
  const std::vector<double> pi = agent.policy_discrete(z);
  double expected = 0.0;
  for (int a = 0; a < 4; ++a) {
    const double q1 = agent.critic_q(z, Action::index(a), 1, false);
    const double q2 = agent.critic_q(z, Action::index(a), 2, false);
    expected += pi[a] * (std::min(q1, q2) - 0.9 * std::log(pi[a]));
  }
  CHECK(agent.soft_value_discrete(z) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("critic loss agrees with an independent target computed from public ops") {
  for (CriticMode mode : {CriticMode::composed, CriticMode::direct}) {
    Agent agent = make_agent(kGrid3, 10, mode, 13, 0.8);
    auto batch = env_batch(kGrid3, 5, 17);
    const double gamma = agent.config().gamma;
    double expected = 0.0;
    for (const auto& rec : batch) {
      const double v_next = agent.soft_value_discrete(rec.z_next, /*use_target=*/true);
      const double y = rec.reward + gamma * (rec.done ? 0.0 : 1.0) * v_next;
      const double q1 = agent.critic_q(rec.z, rec.action, 1, false);
      const double q2 = agent.critic_q(rec.z, rec.action, 2, false);
      expected += 0.5 * ((q1 - y) * (q1 - y) + (q2 - y) * (q2 - y));
    }
    expected /= batch.size();
    CHECK(agent.critic_loss(batch) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("terminal transitions reduce the bellman target to the reward") {
  Agent agent = make_agent(kGrid3, 8, CriticMode::composed, 5);
  zero_prefix(agent.params(), "reward/");
  zero_prefix(agent.params(), "value1/");
  zero_prefix(agent.params(), "value2/");
  auto batch = env_batch(kGrid3, 3, 19);
  for (auto& rec : batch) {
    rec.done = true;
    rec.reward = 0.37;
  }
  // Q == 0 for every record, y == r, so the loss is exactly (0 - 0.37)^2.
  CHECK(agent.critic_loss(batch) == doctest::Approx(0.37 * 0.37).epsilon(1e-14));
  for (auto& rec : batch) rec.reward = 0.0;
  CHECK(agent.critic_loss(batch) == 0.0);
}

TEST_CASE("discrete actor loss matches direct evaluation and is stationary at uniform") {
  Agent agent = make_agent(kGrid3, 10, CriticMode::composed, 23, 0.6);
  auto batch = env_batch(kGrid3, 4, 29);

  double expected = 0.0;
  for (const auto& rec : batch) {
    const std::vector<double> pi = agent.policy_discrete(rec.z);
    double inner = 0.0;
    for (int a = 0; a < 4; ++a) {
      const double q1 = agent.critic_q(rec.z, Action::index(a), 1, false);
      const double q2 = agent.critic_q(rec.z, Action::index(a), 2, false);
      inner += pi[a] * (0.6 * std::log(pi[a]) - std::min(q1, q2));
    }
    expected += inner;
  }
  expected /= batch.size();
  CHECK(agent.actor_loss(batch) == doctest::Approx(expected).epsilon(1e-9));

  // constant critic, tiny alpha: the actor gradient vanishes
  Agent flat = make_agent(kGrid3, 8, CriticMode::composed, 3, 1e-12);
  zero_prefix(flat.params(), "reward/");
  zero_prefix(flat.params(), "value1/");
  zero_prefix(flat.params(), "value2/");
  flat.params().get("reward/head/bo").data[0] = 1.23;
  CHECK(max_abs(flat.actor_grads(batch)) < 1e-9);

  // constant critic, alpha > 0: uniform is the entropy optimum
  Agent ent = make_agent(kGrid3, 8, CriticMode::composed, 3, 0.5);
  zero_prefix(ent.params(), "reward/");
  zero_prefix(ent.params(), "value1/");
  zero_prefix(ent.params(), "value2/");
  zero_prefix(ent.params(), "actor/pi");
  const double uniform_loss = ent.actor_loss(batch);
  CHECK(max_abs(ent.actor_grads(batch)) < 1e-10);
  ent.params().get("actor/pi/bo").data[1] = 2.0;  // peak the policy
  CHECK(ent.actor_loss(batch) > uniform_loss);
}

TEST_CASE("temperature objective: stationarity, sign, and the uniform-policy value") {
  AgentConfig cfg;
  cfg.hidden_width = 8;
  cfg.alpha_init = 0.8;
  cfg.target_entropy = std::log(4.0);  // exactly the uniform entropy
  Rng init(11);
  Agent agent(kGrid3, cfg, init);
  zero_prefix(agent.params(), "actor/pi");
  auto batch = env_batch(kGrid3, 4, 37);

  GradMap g = agent.temperature_grads(batch);
  CHECK(std::abs(g.at("log_alpha").item()) < 1e-10);

  // uniform policy with the 0.6 coefficient: J = 0.4 * alpha * ln n
  AgentConfig cfg2 = cfg;
  cfg2.target_entropy = 0.6 * std::log(4.0);
  Rng init2(11);
  Agent agent2(kGrid3, cfg2, init2);
  zero_prefix(agent2.params(), "actor/pi");
  CHECK(agent2.temperature_loss(batch) ==
        doctest::Approx(0.4 * 0.8 * std::log(4.0)).epsilon(1e-12));

  // entropy below target pushes alpha up (negative log-alpha gradient)
  agent2.params().get("actor/pi/bo").data[0] = 6.0;  // near-deterministic policy
  GradMap g2 = agent2.temperature_grads(batch);
  CHECK(g2.at("log_alpha").item() < 0.0);
}

TEST_CASE("world model objective reduces correctly and reaches zero on perfect data") {
  Agent agent = make_agent(kGrid3, 8, CriticMode::composed, 31);
  auto batch = env_batch(kGrid3, 4, 41);

  // direct arithmetic oracle for Eq-style loss: beta_t*|z+dz-z'|^2 + beta_r*(r_hat-r)^2
  double expected = 0.0;
  for (const auto& rec : batch) {
    const Tensor pred = agent.predict_next(rec.z, rec.action);
    double err = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      const double d = pred.data[i] - rec.z_next.values[i];
      err += d * d;
    }
    const double rr = agent.predict_reward(rec.z, rec.action) - rec.reward;
    expected += 1.0 * err + 1.0 * rr * rr;
  }
  expected /= batch.size();
  CHECK(agent.world_model_loss(batch) == doctest::Approx(expected).epsilon(1e-10));

  // perfect-model transitions: loss is exactly zero
  auto perfect = batch;
  for (auto& rec : perfect) {
    const Tensor pred = agent.predict_next(rec.z, rec.action);
    rec.z_next.values = pred.data;
    rec.reward = agent.predict_reward(rec.z, rec.action);
  }
  CHECK(agent.world_model_loss(perfect) == 0.0);

  // beta_t = 0 leaves the reward term only
  AgentConfig cfg;
  cfg.hidden_width = 8;
  cfg.beta_t = 0.0;
  Rng init(31);
  Agent rw_only(kGrid3, cfg, init);
  double rexp = 0.0;
  for (const auto& rec : batch) {
    const double rr = rw_only.predict_reward(rec.z, rec.action) - rec.reward;
    rexp += rr * rr;
  }
  rexp /= batch.size();
  CHECK(rw_only.world_model_loss(batch) == doctest::Approx(rexp).epsilon(1e-10));
}

TEST_CASE("world model training reduces the loss on a fixed batch") {
  Agent agent = make_agent(kGrid3, 8, CriticMode::composed, 43);
  auto batch = env_batch(kGrid3, 16, 47);
  const double first = agent.world_model_loss(batch);
  double last = first;
  for (int i = 0; i < 100; ++i) last = agent.world_model_update(batch);
  CHECK(last < first);
  CHECK(last < 0.5 * first);
}

TEST_CASE("update applies the four optimizers with the documented partitioning") {
  AgentConfig cfg;
  cfg.hidden_width = 8;
  cfg.batch_size = 8;
  cfg.tau = 0.0;
  cfg.lr_world = 0.0;
  cfg.lr_actor = 0.0;
  cfg.lr_alpha = 0.0;
  cfg.lr_critic = 1e-3;
  Rng init(53);
  Agent agent(kGrid3, cfg, init);

  ReplayBuffer rb(1000);
  for (auto& rec : env_batch(kGrid3, 64, 59)) rb.push(std::move(rec));
  Rng rng(61);

  auto snapshot = [&](const std::string& prefix) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, tensor] : agent.params())
      if (name.rfind(prefix, 0) == 0) out[name] = tensor.data;
    return out;
  };
  auto tgt_before = [&] {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, tensor] : agent.target_params()) out[name] = tensor.data;
    return out;
  }();
  auto world_before = snapshot("transition/");
  auto reward_before = snapshot("reward/");
  auto actor_before = snapshot("actor/");
  auto value_before = snapshot("value1/");
  const double alpha_before = agent.alpha();

  UpdateMetrics m = agent.update(rb, rng);
  CHECK(std::isfinite(m.critic_loss));
  CHECK(m.alpha == alpha_before);  // alpha lr is zero

  CHECK(snapshot("transition/") == world_before);  // critic step leaves the world model alone
  CHECK(snapshot("reward/") == reward_before);
  CHECK(snapshot("actor/") == actor_before);
  CHECK(snapshot("value1/") != value_before);
  // tau = 0: target networks unchanged
  for (const auto& [name, tensor] : agent.target_params())
    CHECK(tensor.data == tgt_before.at(name));

  // all rates zero: nothing moves, losses still reported
  AgentConfig frozen = cfg;
  frozen.lr_critic = 0.0;
  Rng init2(53);
  Agent still(kGrid3, frozen, init2);
  auto all_before = [&] {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, tensor] : still.params()) out[name] = tensor.data;
    return out;
  }();
  UpdateMetrics m2 = still.update(rb, rng);
  CHECK(std::isfinite(m2.world_loss));
  CHECK(std::isfinite(m2.actor_loss));
  CHECK(std::isfinite(m2.temperature_loss));
  CHECK(m2.entropy > 0.0);
  for (const auto& [name, tensor] : still.params()) CHECK(tensor.data == all_before.at(name));

  ReplayBuffer small(10);
  small.push(env_batch(kGrid3, 1, 3)[0]);
  CHECK_THROWS_AS(still.update(small, rng), std::runtime_error);
}

TEST_CASE("swapping the two value networks leaves targets and losses unchanged") {
  Agent agent = make_agent(kGrid3, 8, CriticMode::composed, 67, 0.5);
  auto batch = env_batch(kGrid3, 6, 71);
  const double loss_before = agent.critic_loss(batch);
  const FactoredState z = encode(reset(kGrid3, 73));
  const double v_before = agent.soft_value_discrete(z, true);

  auto swap_stores = [&](ParamStore& ps) {
    for (const auto& name : agent.nets().value_names("value1")) {
      std::string other = "value2" + name.substr(6);
      std::swap(ps.get(name).data, ps.get(other).data);
    }
  };
  swap_stores(agent.params());
  swap_stores(agent.target_params());

  CHECK(agent.soft_value_discrete(z, true) == doctest::Approx(v_before).epsilon(1e-12));
  CHECK(agent.critic_loss(batch) == doctest::Approx(loss_before).epsilon(1e-12));
}

TEST_CASE("alpha stays positive through updates") {
  Agent agent = make_agent(kGrid3, 8, CriticMode::composed, 79);
  ReplayBuffer rb(1000);
  for (auto& rec : env_batch(kGrid3, 64, 83)) rb.push(std::move(rec));
  Rng rng(89);
  for (int i = 0; i < 5; ++i) {
    agent.update(rb, rng);
    CHECK(agent.alpha() > 0.0);
  }
}

TEST_CASE("action selection: argmax, sampling frequencies, bounds") {
  Agent agent = make_agent(kGrid3, 8, CriticMode::composed, 97);
  zero_prefix(agent.params(), "actor/pi");
  Tensor& bias = agent.params().get("actor/pi/bo");
  bias.data = {0.0, 5.0, 0.0, 0.0};
  const FactoredState z = encode(reset(kGrid3, 101));
  Rng rng(103);
  CHECK(agent.select_action(z, PolicyMode::deterministic, rng).discrete == 1);

  bias.data = {0.0, 1.0, -0.5, 0.3};
  const std::vector<double> pi = agent.policy_discrete(z);
  std::vector<int> counts(4, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    ++counts[agent.select_action(z, PolicyMode::stochastic, rng).discrete];
  for (int a = 0; a < 4; ++a) {
    const double sigma = std::sqrt(pi[a] * (1 - pi[a]) / draws);
    CHECK(std::abs(counts[a] / double(draws) - pi[a]) < 3.0 * sigma + 1e-3);
  }

  Agent cont = make_agent(TaskSpec::named("point_reach"), 8, CriticMode::composed, 107);
  const FactoredState zc = encode(reset(TaskSpec::named("point_reach"), 109));
  for (PolicyMode mode : {PolicyMode::deterministic, PolicyMode::stochastic}) {
    const Action a = cont.select_action(zc, mode, rng);
    REQUIRE(a.continuous.size() == 2);
    CHECK(std::abs(a.continuous[0]) <= 1.0);
    CHECK(std::abs(a.continuous[1]) <= 1.0);
  }
}

// ---------------------------------------------------------------------------
// Continuous-action path
// ---------------------------------------------------------------------------

namespace {

double squashed_log_prob(const std::vector<double>& eps, const std::vector<double>& sigma,
                         const std::vector<double>& a) {
  double lp = 0.0;
  for (std::size_t d = 0; d < eps.size(); ++d)
    lp += -0.5 * eps[d] * eps[d] - std::log(sigma[d]) - 0.5 * std::log(2.0 * 3.14159265358979323846) -
          std::log(1.0 - a[d] * a[d] + 1e-6);
  return lp;
}

}  // namespace

TEST_CASE("continuous losses match direct evaluation under fixed noise") {
  TaskSpec spec = TaskSpec::named("point_reach");
  Agent agent = make_agent(spec, 10, CriticMode::composed, 113, 0.7);
  auto batch = env_batch(spec, 4, 127);
  Rng nrng(131);
  UpdateNoise noise = agent.sample_noise(4, nrng);

  double expected_actor = 0.0;
  std::vector<double> log_probs;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto [mu, sigma] = agent.policy_gaussian(batch[b].z);
    std::vector<double> eps = {noise.actor_eps.at(b, 0), noise.actor_eps.at(b, 1)};
    std::vector<double> a(2);
    for (int d = 0; d < 2; ++d) a[d] = std::tanh(mu[d] + sigma[d] * eps[d]);
    const double lp = squashed_log_prob(eps, sigma, a);
    log_probs.push_back(lp);
    const double q1 = agent.critic_q(batch[b].z, Action::move({a[0], a[1]}), 1, false);
    const double q2 = agent.critic_q(batch[b].z, Action::move({a[0], a[1]}), 2, false);
    expected_actor += 0.7 * lp - std::min(q1, q2);
  }
  expected_actor /= batch.size();
  CHECK(agent.actor_loss(batch, &noise) == doctest::Approx(expected_actor).epsilon(1e-9));

  double expected_temp = 0.0;
  for (double lp : log_probs) expected_temp += -0.7 * (lp + agent.target_entropy());
  expected_temp /= log_probs.size();
  CHECK(agent.temperature_loss(batch, &noise) ==
        doctest::Approx(expected_temp).epsilon(1e-9));

  double expected_critic = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto [mu, sigma] = agent.policy_gaussian(batch[b].z_next);
    std::vector<double> eps = {noise.target_eps.at(b, 0), noise.target_eps.at(b, 1)};
    std::vector<double> a(2);
    for (int d = 0; d < 2; ++d) a[d] = std::tanh(mu[d] + sigma[d] * eps[d]);
    const double lp = squashed_log_prob(eps, sigma, a);
    const double q1 = agent.critic_q(batch[b].z_next, Action::move({a[0], a[1]}), 1, true);
    const double q2 = agent.critic_q(batch[b].z_next, Action::move({a[0], a[1]}), 2, true);
    const double v = std::min(q1, q2) - 0.7 * lp;
    const double y = batch[b].reward + 0.99 * (batch[b].done ? 0.0 : 1.0) * v;
    const double o1 = agent.critic_q(batch[b].z, batch[b].action, 1, false);
    const double o2 = agent.critic_q(batch[b].z, batch[b].action, 2, false);
    expected_critic += 0.5 * ((o1 - y) * (o1 - y) + (o2 - y) * (o2 - y));
  }
  expected_critic /= batch.size();
  CHECK(agent.critic_loss(batch, &noise) == doctest::Approx(expected_critic).epsilon(1e-9));
}

TEST_CASE("tanh squashing only increases the sample log-density") {
  Rng rng(137);
  for (int i = 0; i < 200; ++i) {
    const double sigma = std::exp(rng.uniform(-3, 1));
    const double eps = rng.normal();
    const double mu = rng.uniform(-2, 2);
    const double a = std::tanh(mu + sigma * eps);
    const double gauss = -0.5 * eps * eps - std::log(sigma) - 0.5 * std::log(2 * 3.141592653589793);
    const double squashed = gauss - std::log(1.0 - a * a + 1e-6);
    CHECK(squashed >= gauss - 1e-6);
  }
}

TEST_CASE("gaussian entropy monte carlo sanity") {
  Rng rng(139);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double eps = rng.normal();
    acc += 0.5 * eps * eps + 0.5 * std::log(2 * 3.141592653589793);
  }
  CHECK(acc / n == doctest::Approx(1.4189385).epsilon(0.01 / 1.4189));
}

TEST_CASE("soft value continuous limits") {
  TaskSpec spec = TaskSpec::named("point_reach");
  // constant critic: reward head bias c, zero value nets, gamma = 0
  AgentConfig cfg;
  cfg.hidden_width = 8;
  cfg.gamma = 0.0;
  cfg.alpha_init = 1e-12;
  Rng init(149);
  Agent agent(spec, cfg, init);
  zero_prefix(agent.params(), "reward/");
  agent.params().get("reward/head/bo").data[0] = 0.42;
  const FactoredState z = encode(reset(spec, 151));
  Rng rng(157);
  CHECK(agent.soft_value_continuous(z, rng, 16) == doctest::Approx(0.42).epsilon(1e-9));

  // sigma -> 0: the estimate collapses onto min Q(z, tanh(mu))
  zero_prefix(agent.params(), "actor/logstd");
  agent.params().get("actor/logstd/bo").data = {-12.0, -12.0};
  auto [mu, sigma] = agent.policy_gaussian(z);
  const double q1 = agent.critic_q(z, Action::move({std::tanh(mu[0]), std::tanh(mu[1])}), 1, false);
  const double q2 = agent.critic_q(z, Action::move({std::tanh(mu[0]), std::tanh(mu[1])}), 2, false);
  CHECK(agent.soft_value_continuous(z, rng, 4) ==
        doctest::Approx(std::min(q1, q2)).epsilon(1e-6));
}

TEST_CASE("continuous actor gradient pushes the mean toward the action penalty optimum") {
  TaskSpec spec = TaskSpec::named("point_reach");
  AgentConfig cfg;
  cfg.hidden_width = 8;
  cfg.gamma = 0.0;
  cfg.alpha_init = 1e-12;
  Rng init(163);
  Agent agent(spec, cfg, init);

  // reward net computing exactly -(|a_x| + |a_y|): relu pairs on the action
  GnnNets nets = agent.nets();
  nets.rw_edge = {2 * nets.d + 2, {}, 1, false};
  nets.rw_node = {nets.d + 2 + 1, {4}, 1, false};
  nets.rw_head = {1, {}, 1, false};
  Rng init2(163);
  agent.rebuild_with_nets(nets, init2);
  zero_prefix(agent.params(), "reward/");
  Tensor& w0 = agent.params().get("reward/node/w0");  // (d+3) x 4
  const int d = nets.d;
  w0.at(d + 0, 0) = 1.0;
  w0.at(d + 0, 1) = -1.0;
  w0.at(d + 1, 2) = 1.0;
  w0.at(d + 1, 3) = -1.0;
  set_param(agent.params(), "reward/node/wo", {-1.0, -1.0, -1.0, -1.0});
  set_param(agent.params(), "reward/head/wo", {1.0});
  zero_prefix(agent.params(), "actor/mu");
  zero_prefix(agent.params(), "actor/logstd");
  set_param(agent.params(), "actor/mu/bo", {0.5, -0.3});
  set_param(agent.params(), "actor/logstd/bo", {-6.0, -6.0});

  // sanity: the crafted critic is the L1 penalty
  const FactoredState z = encode(reset(spec, 167));
  CHECK(agent.predict_reward(z, Action::move({0.2, -0.1})) == doctest::Approx(-0.3).epsilon(1e-12));

  auto batch = env_batch(spec, 4, 173);
  Rng nrng(179);
  UpdateNoise noise = agent.sample_noise(4, nrng);
  GradMap g = agent.actor_grads(batch, &noise);
  CHECK(g.at("actor/mu/bo").data[0] > 0.0);  // descent pulls mu_x down toward 0
  CHECK(g.at("actor/mu/bo").data[1] < 0.0);  // and mu_y up toward 0
}
