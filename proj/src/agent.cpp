#include "slotrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slotrl {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)
constexpr double kSquashEps = 1e-6;

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("update: non-finite ") + what + " loss");
}

}  // namespace

Agent::Agent(const TaskSpec& spec, AgentConfig cfg, Rng& init_rng)
    : spec_(spec), cfg_(cfg), nets_(GnnNets::make(spec, cfg.hidden_width)) {
  if (cfg_.batch_size < 1) throw std::invalid_argument("AgentConfig: batch_size < 1");
  if (std::isnan(cfg_.target_entropy)) {
    cfg_.target_entropy = nets_.discrete
                              ? 0.6 * std::log(static_cast<double>(nets_.n_actions))
                              : -static_cast<double>(nets_.action_dim);
  }
  init_params(init_rng);
}

void Agent::rebuild_with_nets(const GnnNets& nets, Rng& init_rng) {
  nets_ = nets;
  online_ = ParamStore();
  target_ = ParamStore();
  init_params(init_rng);
  target_g_ = LossGraph();
  critic_g_ = LossGraph();
  actor_g_ = LossGraph();
  temp_g_ = LossGraph();
  world_g_ = LossGraph();
  policy_g_ = LossGraph();
  fast_.reset();
}

FastDiscreteCritic& Agent::fast() {
  if (!fast_)
    fast_ = std::make_unique<FastDiscreteCritic>(spec_, nets_, cfg_.critic_mode, cfg_.gamma);
  return *fast_;
}

std::string Agent::value_prefix(int which) const {
  const bool composed = cfg_.critic_mode == CriticMode::composed;
  if (which == 1) return composed ? "value1" : "q1";
  if (which == 2) return composed ? "value2" : "q2";
  throw std::invalid_argument("critic index " + std::to_string(which) + " not in {1,2}");
}

std::vector<std::string> Agent::critic_param_names() const {
  std::vector<std::string> names;
  if (cfg_.critic_mode == CriticMode::composed) {
    for (auto& n : nets_.value_names("value1")) names.push_back(n);
    for (auto& n : nets_.value_names("value2")) names.push_back(n);
  } else {
    for (auto& n : nets_.q_direct_names("q1")) names.push_back(n);
    for (auto& n : nets_.q_direct_names("q2")) names.push_back(n);
  }
  return names;
}

std::vector<std::string> Agent::world_param_names() const {
  return nets_.world_model_names();
}

void Agent::init_params(Rng& rng) {
  if (cfg_.critic_mode == CriticMode::composed) {
    nets_.init_world_model(online_, rng);
    nets_.init_value(online_, "value1", rng);
    nets_.init_value(online_, "value2", rng);
  } else {
    nets_.init_q_direct(online_, "q1", rng);
    nets_.init_q_direct(online_, "q2", rng);
  }
  nets_.init_actor(online_, rng);
  online_.add("log_alpha", Tensor::scalar(std::log(cfg_.alpha_init)));

  for (const auto& name : critic_param_names()) target_.add(name, online_.get(name));

  opt_world_ = Adam(AdamConfig{cfg_.lr_world, 0.9, 0.999, 1e-8}, world_param_names());
  opt_critic_ = Adam(AdamConfig{cfg_.lr_critic, 0.9, 0.999, 1e-8}, critic_param_names());
  opt_actor_ = Adam(AdamConfig{cfg_.lr_actor, 0.9, 0.999, 1e-8}, nets_.actor_names());
  opt_alpha_ = Adam(AdamConfig{cfg_.lr_alpha, 0.9, 0.999, 1e-8}, {"log_alpha"});
}

void Agent::bind_params(Bindings& b, const std::vector<std::string>& names,
                        bool value_from_target) {
  for (const auto& name : names) {
    if (value_from_target && target_.contains(name))
      b[name] = &target_.get(name);
    else
      b[name] = &online_.get(name);
  }
}

// ---------------------------------------------------------------------------
// Graph building blocks
// ---------------------------------------------------------------------------

NodeId Agent::q_sweep_all_actions(Graph& g, gnn::ParamNodes& p, NodeId z, int B) {
  const int K = nets_.k, n = nets_.n_actions;
  const std::size_t rows = static_cast<std::size_t>(B) * n * K;
  std::vector<std::size_t> tile(rows);
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < n; ++a)
      for (int k = 0; k < K; ++k)
        tile[(static_cast<std::size_t>(b) * n + a) * K + k] =
            static_cast<std::size_t>(b) * K + k;
  NodeId zt = g.gather_rows(z, std::move(tile));

  const Tensor one_tile = all_actions_tile(spec_);  // (n*K, A)
  Tensor at({rows, one_tile.shape[1]});
  for (int b = 0; b < B; ++b)
    std::copy(one_tile.data.begin(), one_tile.data.end(),
              at.data.begin() + static_cast<std::size_t>(b) * one_tile.data.size());
  NodeId a_tile = g.constant(std::move(at));

  NodeId q;
  const int BN = B * n;
  if (cfg_.critic_mode == CriticMode::composed) {
    NodeId dz = transition_delta(g, p, nets_, zt, a_tile, BN);
    NodeId zp = g.add(zt, dz);
    NodeId rhat = reward_scalar(g, p, nets_, zt, a_tile, BN);
    NodeId v1 = value_scalar(g, p, nets_, "value1", zp, BN);
    NodeId v2 = value_scalar(g, p, nets_, "value2", zp, BN);
    q = g.add(rhat, g.scale(g.minimum(v1, v2), cfg_.gamma));
  } else {
    NodeId q1 = q_direct_scalar(g, p, nets_, "q1", zt, a_tile, BN);
    NodeId q2 = q_direct_scalar(g, p, nets_, "q2", zt, a_tile, BN);
    q = g.minimum(q1, q2);
  }
  return g.reshape(q, {static_cast<std::size_t>(B), static_cast<std::size_t>(n)});
}

NodeId Agent::q_min_single(Graph& g, gnn::ParamNodes& p, NodeId z, NodeId a_enc, int B) {
  if (cfg_.critic_mode == CriticMode::composed) {
    NodeId dz = transition_delta(g, p, nets_, z, a_enc, B);
    NodeId zp = g.add(z, dz);
    NodeId rhat = reward_scalar(g, p, nets_, z, a_enc, B);
    NodeId v1 = value_scalar(g, p, nets_, "value1", zp, B);
    NodeId v2 = value_scalar(g, p, nets_, "value2", zp, B);
    return g.add(rhat, g.scale(g.minimum(v1, v2), cfg_.gamma));
  }
  NodeId q1 = q_direct_scalar(g, p, nets_, "q1", z, a_enc, B);
  NodeId q2 = q_direct_scalar(g, p, nets_, "q2", z, a_enc, B);
  return g.minimum(q1, q2);
}

Agent::SampledAction Agent::sample_squashed(Graph& g, gnn::ParamNodes& p, NodeId z, NodeId eps,
                                            int B) {
  auto [mu, log_std] = actor_gaussian(g, p, nets_, z, B);
  NodeId sigma = g.exp_(log_std);
  NodeId u = g.add(mu, g.mul(sigma, eps));
  NodeId a = g.tanh_(u);
  // log pi = sum_d [ -eps^2/2 - log sigma - ln(1 - a^2 + eps) ] - dim*ln(2*pi)/2
  NodeId per_dim = g.sub(g.sub(g.scale(g.square(eps), -0.5), log_std),
                         g.log_(g.add_scalar(g.scale(g.square(a), -1.0), 1.0 + kSquashEps)));
  NodeId log_pi = g.add_scalar(
      g.reshape(g.sum_axis(per_dim, 1), {static_cast<std::size_t>(B), 1}),
      -kHalfLog2Pi * nets_.action_dim);
  return {a, log_pi};
}

// Row index b repeated K times: broadcast per-batch rows to per-slot rows.
static std::vector<std::size_t> slot_broadcast_idx(int B, int K) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(B) * K);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) idx[static_cast<std::size_t>(b) * K + k] = b;
  return idx;
}

// ---------------------------------------------------------------------------
// Cached per-batch loss graphs
// ---------------------------------------------------------------------------

Agent::LossGraph& Agent::target_graph(int B) {
  LossGraph& lg = target_g_;
  if (lg.batch == B) return lg;
  lg = LossGraph();
  lg.batch = B;
  Graph& g = lg.g;
  gnn::ParamNodes p(g, online_);
  const std::size_t bk = static_cast<std::size_t>(B) * nets_.k;
  NodeId z_next = g.input("z_next", {bk, static_cast<std::size_t>(nets_.d)});
  NodeId r = g.input("r", {static_cast<std::size_t>(B), 1});
  NodeId not_done = g.input("not_done", {static_cast<std::size_t>(B), 1});

  NodeId v;
  if (nets_.discrete) {
    NodeId logits = actor_logits(g, p, nets_, z_next, B);
    NodeId pi = g.softmax(logits);
    NodeId log_pi = g.log_softmax(logits);
    NodeId q = q_sweep_all_actions(g, p, z_next, B);
    NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")),
                                      {static_cast<std::size_t>(B),
                                       static_cast<std::size_t>(nets_.n_actions)});
    NodeId inner = g.sub(q, g.mul(alpha, log_pi));
    v = g.reshape(g.sum_axis(g.mul(pi, inner), 1), {static_cast<std::size_t>(B), 1});
  } else {
    NodeId eps = g.input("eps", {static_cast<std::size_t>(B),
                                 static_cast<std::size_t>(nets_.action_dim)});
    SampledAction s = sample_squashed(g, p, z_next, eps, B);
    NodeId a_enc = g.gather_rows(s.a, slot_broadcast_idx(B, nets_.k));
    NodeId qmin = q_min_single(g, p, z_next, a_enc, B);
    NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")), {static_cast<std::size_t>(B), 1});
    v = g.sub(qmin, g.mul(alpha, s.log_pi));
  }
  lg.out = g.add(r, g.mul(not_done, g.scale(v, cfg_.gamma)));
  lg.param_names = p.used();
  return lg;
}

Agent::LossGraph& Agent::critic_graph(int B) {
  LossGraph& lg = critic_g_;
  if (lg.batch == B) return lg;
  lg = LossGraph();
  lg.batch = B;
  Graph& g = lg.g;
  gnn::ParamNodes p(g, online_);
  const std::size_t bk = static_cast<std::size_t>(B) * nets_.k;
  NodeId z = g.input("z", {bk, static_cast<std::size_t>(nets_.d)});
  NodeId a = g.input("a", {bk, static_cast<std::size_t>(nets_.a_obj)});
  NodeId y = g.input("y", {static_cast<std::size_t>(B), 1});

  NodeId q1, q2;
  if (cfg_.critic_mode == CriticMode::composed) {
    NodeId dz = transition_delta(g, p, nets_, z, a, B);
    NodeId zp = g.add(z, dz);
    NodeId rhat = reward_scalar(g, p, nets_, z, a, B);
    q1 = g.add(rhat, g.scale(value_scalar(g, p, nets_, "value1", zp, B), cfg_.gamma));
    q2 = g.add(rhat, g.scale(value_scalar(g, p, nets_, "value2", zp, B), cfg_.gamma));
  } else {
    q1 = q_direct_scalar(g, p, nets_, "q1", z, a, B);
    q2 = q_direct_scalar(g, p, nets_, "q2", z, a, B);
  }
  lg.out = g.scale(g.add(g.mean_all(g.square(g.sub(q1, y))),
                         g.mean_all(g.square(g.sub(q2, y)))),
                   0.5);
  lg.param_names = p.used();
  return lg;
}

Agent::LossGraph& Agent::actor_graph(int B) {
  LossGraph& lg = actor_g_;
  if (lg.batch == B) return lg;
  lg = LossGraph();
  lg.batch = B;
  Graph& g = lg.g;
  gnn::ParamNodes p(g, online_);
  const std::size_t bk = static_cast<std::size_t>(B) * nets_.k;
  NodeId z = g.input("z", {bk, static_cast<std::size_t>(nets_.d)});

  if (nets_.discrete) {
    NodeId logits = actor_logits(g, p, nets_, z, B);
    NodeId pi = g.softmax(logits);
    NodeId log_pi = g.log_softmax(logits);
    // min double-Q over all actions, precomputed outside the graph; the
    // actor objective blocks gradients into the critic anyway.
    NodeId q = g.input("q", {static_cast<std::size_t>(B),
                             static_cast<std::size_t>(nets_.n_actions)});
    NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")),
                                      {static_cast<std::size_t>(B),
                                       static_cast<std::size_t>(nets_.n_actions)});
    NodeId inner = g.sub(g.mul(alpha, log_pi), q);
    lg.out = g.mean_all(g.sum_axis(g.mul(pi, inner), 1));
    lg.aux = pi;
    lg.aux2 = log_pi;
  } else {
    NodeId eps = g.input("eps", {static_cast<std::size_t>(B),
                                 static_cast<std::size_t>(nets_.action_dim)});
    SampledAction s = sample_squashed(g, p, z, eps, B);
    NodeId a_enc = g.gather_rows(s.a, slot_broadcast_idx(B, nets_.k));
    NodeId qmin = q_min_single(g, p, z, a_enc, B);
    NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")), {static_cast<std::size_t>(B), 1});
    lg.out = g.mean_all(g.sub(g.mul(alpha, s.log_pi), qmin));
    lg.aux = s.log_pi;
  }
  lg.param_names = p.used();
  return lg;
}

Agent::LossGraph& Agent::temp_graph(int B) {
  LossGraph& lg = temp_g_;
  if (lg.batch == B) return lg;
  lg = LossGraph();
  lg.batch = B;
  Graph& g = lg.g;
  gnn::ParamNodes p(g, online_);

  if (nets_.discrete) {
    const std::size_t n = static_cast<std::size_t>(nets_.n_actions);
    NodeId pi = g.input("pi", {static_cast<std::size_t>(B), n});
    NodeId log_pi = g.input("log_pi", {static_cast<std::size_t>(B), n});
    NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")), {static_cast<std::size_t>(B), n});
    NodeId inner = g.scale(g.mul(alpha, g.add_scalar(log_pi, cfg_.target_entropy)), -1.0);
    lg.out = g.mean_all(g.sum_axis(g.mul(pi, inner), 1));
  } else {
    NodeId log_pi = g.input("log_pi", {static_cast<std::size_t>(B), 1});
    NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")), {static_cast<std::size_t>(B), 1});
    lg.out = g.mean_all(g.scale(g.mul(alpha, g.add_scalar(log_pi, cfg_.target_entropy)), -1.0));
  }
  lg.param_names = p.used();
  return lg;
}

Agent::LossGraph& Agent::world_graph(int B) {
  if (cfg_.critic_mode != CriticMode::composed)
    throw std::invalid_argument("world model: unavailable with the direct critic");
  LossGraph& lg = world_g_;
  if (lg.batch == B) return lg;
  lg = LossGraph();
  lg.batch = B;
  Graph& g = lg.g;
  gnn::ParamNodes p(g, online_);
  const std::size_t bk = static_cast<std::size_t>(B) * nets_.k;
  NodeId z = g.input("z", {bk, static_cast<std::size_t>(nets_.d)});
  NodeId a = g.input("a", {bk, static_cast<std::size_t>(nets_.a_obj)});
  NodeId z_next = g.input("z_next", {bk, static_cast<std::size_t>(nets_.d)});
  NodeId r = g.input("r", {static_cast<std::size_t>(B), 1});

  NodeId dz = transition_delta(g, p, nets_, z, a, B);
  NodeId err = g.sub(g.add(z, dz), z_next);
  NodeId per_b = g.reshape(g.square(err),
                           {static_cast<std::size_t>(B),
                            static_cast<std::size_t>(nets_.k) * nets_.d});
  NodeId trans_term = g.reshape(g.sum_axis(per_b, 1), {static_cast<std::size_t>(B), 1});
  NodeId rhat = reward_scalar(g, p, nets_, z, a, B);
  NodeId reward_term = g.square(g.sub(rhat, r));
  lg.out = g.mean_all(g.add(g.scale(trans_term, cfg_.beta_t),
                            g.scale(reward_term, cfg_.beta_r)));
  lg.param_names = p.used();
  return lg;
}

Agent::LossGraph& Agent::policy_graph(int B) {
  LossGraph& lg = policy_g_;
  if (lg.batch == B) return lg;
  lg = LossGraph();
  lg.batch = B;
  Graph& g = lg.g;
  gnn::ParamNodes p(g, online_);
  const std::size_t bk = static_cast<std::size_t>(B) * nets_.k;
  NodeId z = g.input("z", {bk, static_cast<std::size_t>(nets_.d)});
  if (nets_.discrete) {
    lg.out = g.softmax(actor_logits(g, p, nets_, z, B));
  } else {
    auto [mu, log_std] = actor_gaussian(g, p, nets_, z, B);
    lg.aux = mu;
    lg.out = log_std;  // later node; evaluating it computes mu as well
  }
  lg.param_names = p.used();
  return lg;
}

// ---------------------------------------------------------------------------
// Packing and loss evaluation
// ---------------------------------------------------------------------------

Agent::BatchTensors Agent::pack(const std::vector<TransitionRecord>& batch) const {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const std::size_t B = batch.size();
  const std::size_t K = nets_.k, D = nets_.d;
  BatchTensors t;
  t.z = Tensor({B * K, D});
  t.z_next = Tensor({B * K, D});
  t.r = Tensor({B, 1});
  t.not_done = Tensor({B, 1});
  std::vector<Action> actions;
  actions.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    const TransitionRecord& rec = batch[b];
    if (rec.z.k != nets_.k || rec.z.d != nets_.d)
      throw std::invalid_argument("loss: record state shape mismatch");
    std::copy(rec.z.values.begin(), rec.z.values.end(), t.z.data.begin() + b * K * D);
    std::copy(rec.z_next.values.begin(), rec.z_next.values.end(),
              t.z_next.data.begin() + b * K * D);
    t.r.data[b] = rec.reward;
    t.not_done.data[b] = rec.done ? 0.0 : 1.0;
    actions.push_back(rec.action);
  }
  t.a = batch_object_actions(actions, spec_);
  return t;
}

UpdateNoise Agent::sample_noise(int batch, Rng& rng) const {
  UpdateNoise n;
  if (nets_.discrete) return n;
  n.actor_eps = Tensor({static_cast<std::size_t>(batch),
                        static_cast<std::size_t>(nets_.action_dim)});
  n.target_eps = Tensor(n.actor_eps.shape);
  for (auto& v : n.actor_eps.data) v = rng.normal();
  for (auto& v : n.target_eps.data) v = rng.normal();
  return n;
}

Tensor Agent::compute_targets(const std::vector<TransitionRecord>& batch,
                              const UpdateNoise* noise) {
  const int B = static_cast<int>(batch.size());
  BatchTensors t = pack(batch);
  if (nets_.discrete) {
    // Forward-only: sweep the composed critic over every action with the
    // target value networks, combine with the soft state value.
    FastDiscreteCritic& f = fast();
    f.bind(online_, target_);
    const Tensor q = f.min_q_all_actions(t.z_next, B);
    const Tensor& logits = f.actor_logits(t.z_next, B);
    const int n = nets_.n_actions;
    const double alpha_v = alpha();
    Tensor y({static_cast<std::size_t>(B), 1});
    for (int b = 0; b < B; ++b) {
      const double* lrow = logits.data.data() + static_cast<std::size_t>(b) * n;
      double mx = lrow[0];
      for (int a = 1; a < n; ++a) mx = std::max(mx, lrow[a]);
      double zsum = 0.0;
      for (int a = 0; a < n; ++a) zsum += std::exp(lrow[a] - mx);
      const double lz = std::log(zsum);
      double v = 0.0;
      for (int a = 0; a < n; ++a) {
        const double logp = lrow[a] - mx - lz;
        v += std::exp(logp) * (q.at(b, a) - alpha_v * logp);
      }
      y.data[b] = t.r.data[b] + cfg_.gamma * t.not_done.data[b] * v;
    }
    return y;
  }
  LossGraph& lg = target_graph(B);
  Bindings b;
  bind_params(b, lg.param_names, /*value_from_target=*/true);
  b["z_next"] = &t.z_next;
  b["r"] = &t.r;
  b["not_done"] = &t.not_done;
  if (noise == nullptr || noise->target_eps.shape.empty())
    throw std::invalid_argument("critic target: continuous task needs sampling noise");
  b["eps"] = &noise->target_eps;
  return lg.g.evaluate(lg.out, b);
}

double Agent::world_model_loss(const std::vector<TransitionRecord>& batch) {
  double loss = 0.0;
  (void)world_model_grads(batch, &loss);
  return loss;
}

GradMap Agent::world_model_grads(const std::vector<TransitionRecord>& batch, double* loss) {
  const int B = static_cast<int>(batch.size());
  BatchTensors t = pack(batch);
  LossGraph& lg = world_graph(B);
  Bindings b;
  bind_params(b, lg.param_names, false);
  b["z"] = &t.z;
  b["a"] = &t.a;
  b["z_next"] = &t.z_next;
  b["r"] = &t.r;
  const double v = lg.g.evaluate(lg.out, b).item();
  if (loss) *loss = v;
  return lg.g.gradient(lg.out, world_param_names());
}

double Agent::critic_loss(const std::vector<TransitionRecord>& batch, const UpdateNoise* noise) {
  double loss = 0.0;
  (void)critic_grads(batch, noise, &loss);
  return loss;
}

GradMap Agent::critic_grads(const std::vector<TransitionRecord>& batch, const UpdateNoise* noise,
                            double* loss) {
  const int B = static_cast<int>(batch.size());
  Tensor y = compute_targets(batch, noise);
  BatchTensors t = pack(batch);
  LossGraph& lg = critic_graph(B);
  Bindings b;
  bind_params(b, lg.param_names, false);
  b["z"] = &t.z;
  b["a"] = &t.a;
  b["y"] = &y;
  const double v = lg.g.evaluate(lg.out, b).item();
  if (loss) *loss = v;
  return lg.g.gradient(lg.out, critic_param_names());
}

double Agent::actor_loss(const std::vector<TransitionRecord>& batch, const UpdateNoise* noise) {
  double loss = 0.0;
  (void)actor_grads(batch, noise, &loss);
  return loss;
}

GradMap Agent::actor_grads(const std::vector<TransitionRecord>& batch, const UpdateNoise* noise,
                           double* loss) {
  const int B = static_cast<int>(batch.size());
  BatchTensors t = pack(batch);
  LossGraph& lg = actor_graph(B);
  Bindings b;
  bind_params(b, lg.param_names, false);
  b["z"] = &t.z;
  Tensor q;
  if (nets_.discrete) {
    FastDiscreteCritic& f = fast();
    f.bind(online_, online_);
    q = f.min_q_all_actions(t.z, B);
    b["q"] = &q;
  } else {
    if (noise == nullptr || noise->actor_eps.shape.empty())
      throw std::invalid_argument("actor loss: continuous task needs sampling noise");
    b["eps"] = &noise->actor_eps;
  }
  const double v = lg.g.evaluate(lg.out, b).item();
  if (loss) *loss = v;
  return lg.g.gradient(lg.out, nets_.actor_names());
}

double Agent::temperature_loss(const std::vector<TransitionRecord>& batch,
                               const UpdateNoise* noise) {
  double loss = 0.0;
  (void)temperature_grads(batch, noise, &loss);
  return loss;
}

GradMap Agent::temperature_grads(const std::vector<TransitionRecord>& batch,
                                 const UpdateNoise* noise, double* loss) {
  const int B = static_cast<int>(batch.size());
  BatchTensors t = pack(batch);

  // Fresh policy evaluation at the batch states.
  LossGraph& ag = actor_graph(B);
  Bindings ab;
  bind_params(ab, ag.param_names, false);
  ab["z"] = &t.z;
  Tensor q;
  if (nets_.discrete) {
    FastDiscreteCritic& f = fast();
    f.bind(online_, online_);
    q = f.min_q_all_actions(t.z, B);
    ab["q"] = &q;
  } else {
    if (noise == nullptr || noise->actor_eps.shape.empty())
      throw std::invalid_argument("temperature loss: continuous task needs sampling noise");
    ab["eps"] = &noise->actor_eps;
  }
  ag.g.evaluate(ag.out, ab);
  Tensor pi, log_pi;
  if (nets_.discrete) {
    pi = ag.g.value(ag.aux);
    log_pi = ag.g.value(ag.aux2);
  } else {
    log_pi = ag.g.value(ag.aux);
  }

  LossGraph& lg = temp_graph(B);
  Bindings b;
  bind_params(b, lg.param_names, false);
  if (nets_.discrete) {
    b["pi"] = &pi;
    b["log_pi"] = &log_pi;
  } else {
    b["log_pi"] = &log_pi;
  }
  const double v = lg.g.evaluate(lg.out, b).item();
  if (loss) *loss = v;
  return lg.g.gradient(lg.out, {"log_alpha"});
}

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

double Agent::world_model_update(const std::vector<TransitionRecord>& batch) {
  double loss = 0.0;
  GradMap grads = world_model_grads(batch, &loss);
  check_finite(loss, "world model");
  opt_world_.step(online_, grads);
  return loss;
}

UpdateMetrics Agent::update(ReplayBuffer& replay, Rng& rng) {
  const std::size_t B = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<TransitionRecord> batch = replay.sample(B, rng);
  UpdateNoise noise = sample_noise(static_cast<int>(B), rng);
  const UpdateNoise* np = nets_.discrete ? nullptr : &noise;

  UpdateMetrics m;

  if (cfg_.critic_mode == CriticMode::composed)
    m.world_loss = world_model_update(batch);

  GradMap cg = critic_grads(batch, np, &m.critic_loss);
  check_finite(m.critic_loss, "critic");
  opt_critic_.step(online_, cg);

  GradMap agr = actor_grads(batch, np, &m.actor_loss);
  check_finite(m.actor_loss, "actor");

  // Entropy estimate and the temperature inputs come from the actor forward.
  LossGraph& ag = actor_g_;
  Tensor pi, log_pi;
  if (nets_.discrete) {
    pi = ag.g.value(ag.aux);
    log_pi = ag.g.value(ag.aux2);
    double h = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      for (int a = 0; a < nets_.n_actions; ++a)
        h -= pi.at(b, a) * log_pi.at(b, a);
    }
    m.entropy = h / static_cast<double>(B);
  } else {
    log_pi = ag.g.value(ag.aux);
    double h = 0.0;
    for (std::size_t b = 0; b < B; ++b) h -= log_pi.at(b, 0);
    m.entropy = h / static_cast<double>(B);
  }
  opt_actor_.step(online_, agr);

  LossGraph& tg = temp_graph(static_cast<int>(B));
  Bindings tb;
  bind_params(tb, tg.param_names, false);
  if (nets_.discrete) {
    tb["pi"] = &pi;
    tb["log_pi"] = &log_pi;
  } else {
    tb["log_pi"] = &log_pi;
  }
  m.temperature_loss = tg.g.evaluate(tg.out, tb).item();
  check_finite(m.temperature_loss, "temperature");
  GradMap tgr = tg.g.gradient(tg.out, {"log_alpha"});
  opt_alpha_.step(online_, tgr);

  polyak_update(target_, online_, cfg_.tau);

  m.alpha = alpha();
  return m;
}

// ---------------------------------------------------------------------------
// Forward-only queries
// ---------------------------------------------------------------------------

double Agent::critic_q(const FactoredState& z, const Action& a, int which, bool use_target) {
  Graph g;
  gnn::ParamNodes p(g, online_);
  NodeId zi = g.constant(to_tensor(z));
  NodeId ai = g.constant(encode_object_actions(a, spec_));
  NodeId q;
  if (cfg_.critic_mode == CriticMode::composed) {
    NodeId dz = transition_delta(g, p, nets_, zi, ai, 1);
    NodeId zp = g.add(zi, dz);
    NodeId rhat = reward_scalar(g, p, nets_, zi, ai, 1);
    NodeId v = value_scalar(g, p, nets_, value_prefix(which), zp, 1);
    q = g.add(rhat, g.scale(v, cfg_.gamma));
  } else {
    q = q_direct_scalar(g, p, nets_, value_prefix(which), zi, ai, 1);
  }
  Bindings b;
  bind_params(b, p.used(), use_target);
  return g.evaluate(q, b).item();
}

double Agent::soft_value_discrete(const FactoredState& z, bool use_target) {
  if (!nets_.discrete) throw std::invalid_argument("soft_value_discrete: continuous task");
  Graph g;
  gnn::ParamNodes p(g, online_);
  NodeId zi = g.constant(to_tensor(z));
  NodeId logits = actor_logits(g, p, nets_, zi, 1);
  NodeId pi = g.softmax(logits);
  NodeId log_pi = g.log_softmax(logits);
  NodeId q = q_sweep_all_actions(g, p, zi, 1);
  NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")),
                                    {1, static_cast<std::size_t>(nets_.n_actions)});
  NodeId v = g.sum_axis(g.mul(pi, g.sub(q, g.mul(alpha, log_pi))), 1);
  Bindings b;
  bind_params(b, p.used(), use_target);
  return g.evaluate(v, b).data[0];
}

double Agent::soft_value_continuous(const FactoredState& z, Rng& rng, int sample_count,
                                    bool use_target) {
  if (nets_.discrete) throw std::invalid_argument("soft_value_continuous: discrete task");
  Graph g;
  gnn::ParamNodes p(g, online_);
  NodeId zi = g.constant(to_tensor(z));
  NodeId eps = g.input("eps", {1, static_cast<std::size_t>(nets_.action_dim)});
  SampledAction s = sample_squashed(g, p, zi, eps, 1);
  NodeId a_enc = g.gather_rows(s.a, slot_broadcast_idx(1, nets_.k));
  NodeId qmin = q_min_single(g, p, zi, a_enc, 1);
  NodeId alpha = g.broadcast_scalar(g.exp_(p("log_alpha")), {1, 1});
  NodeId v = g.sub(qmin, g.mul(alpha, s.log_pi));

  double acc = 0.0;
  for (int i = 0; i < sample_count; ++i) {
    Tensor e({1, static_cast<std::size_t>(nets_.action_dim)});
    for (auto& x : e.data) x = rng.normal();
    Bindings b;
    bind_params(b, p.used(), use_target);
    b["eps"] = &e;
    acc += g.evaluate(v, b).data[0];
  }
  return acc / sample_count;
}

std::vector<double> Agent::policy_discrete(const FactoredState& z) {
  if (!nets_.discrete) throw std::invalid_argument("policy_discrete: continuous task");
  LossGraph& lg = policy_graph(1);
  Tensor flat = to_tensor(z);
  Bindings b;
  bind_params(b, lg.param_names, false);
  b["z"] = &flat;
  const Tensor& pi = lg.g.evaluate(lg.out, b);
  return pi.data;
}

std::pair<std::vector<double>, std::vector<double>> Agent::policy_gaussian(
    const FactoredState& z) {
  if (nets_.discrete) throw std::invalid_argument("policy_gaussian: discrete task");
  LossGraph& lg = policy_graph(1);
  Tensor flat = to_tensor(z);
  Bindings b;
  bind_params(b, lg.param_names, false);
  b["z"] = &flat;
  lg.g.evaluate(lg.out, b);
  std::vector<double> mu = lg.g.value(lg.aux).data;
  std::vector<double> sigma = lg.g.value(lg.out).data;
  for (auto& s : sigma) s = std::exp(s);
  return {mu, sigma};
}

Tensor Agent::predict_next(const FactoredState& z, const Action& a) {
  Graph g;
  gnn::ParamNodes p(g, online_);
  NodeId zi = g.constant(to_tensor(z));
  NodeId ai = g.constant(encode_object_actions(a, spec_));
  NodeId out = g.add(zi, transition_delta(g, p, nets_, zi, ai, 1));
  Bindings b;
  bind_params(b, p.used(), false);
  return g.evaluate(out, b);
}

double Agent::predict_reward(const FactoredState& z, const Action& a) {
  Graph g;
  gnn::ParamNodes p(g, online_);
  NodeId zi = g.constant(to_tensor(z));
  NodeId ai = g.constant(encode_object_actions(a, spec_));
  NodeId out = reward_scalar(g, p, nets_, zi, ai, 1);
  Bindings b;
  bind_params(b, p.used(), false);
  return g.evaluate(out, b).data[0];
}

// ---------------------------------------------------------------------------
// Action selection
// ---------------------------------------------------------------------------

std::vector<Action> Agent::select_actions(const std::vector<FactoredState>& zs, PolicyMode mode,
                                          Rng& rng) {
  if (zs.empty()) return {};
  const int B = static_cast<int>(zs.size());
  const std::size_t K = nets_.k, D = nets_.d;
  Tensor z({zs.size() * K, D});
  for (std::size_t b = 0; b < zs.size(); ++b) {
    if (zs[b].k != nets_.k || zs[b].d != nets_.d)
      throw std::invalid_argument("select_actions: state shape mismatch");
    std::copy(zs[b].values.begin(), zs[b].values.end(), z.data.begin() + b * K * D);
  }
  LossGraph& lg = policy_graph(B);
  Bindings b;
  bind_params(b, lg.param_names, false);
  b["z"] = &z;
  lg.g.evaluate(lg.out, b);

  std::vector<Action> actions;
  actions.reserve(zs.size());
  if (nets_.discrete) {
    const Tensor& pi = lg.g.value(lg.out);
    for (int i = 0; i < B; ++i) {
      int pick = 0;
      if (mode == PolicyMode::deterministic) {
        double best = -1.0;
        for (int a = 0; a < nets_.n_actions; ++a)
          if (pi.at(i, a) > best) {
            best = pi.at(i, a);
            pick = a;
          }
      } else {
        const double u = rng.uniform();
        double acc = 0.0;
        pick = nets_.n_actions - 1;
        for (int a = 0; a < nets_.n_actions; ++a) {
          acc += pi.at(i, a);
          if (u < acc) {
            pick = a;
            break;
          }
        }
      }
      actions.push_back(Action::index(pick));
    }
  } else {
    const Tensor& log_std = lg.g.value(lg.out);
    const Tensor& mu = lg.g.value(lg.aux);
    for (int i = 0; i < B; ++i) {
      std::vector<double> a(nets_.action_dim);
      for (int d = 0; d < nets_.action_dim; ++d) {
        double u = mu.at(i, d);
        if (mode == PolicyMode::stochastic) u += std::exp(log_std.at(i, d)) * rng.normal();
        a[d] = std::tanh(u);
      }
      actions.push_back(Action::move(std::move(a)));
    }
  }
  return actions;
}

Action Agent::select_action(const FactoredState& z, PolicyMode mode, Rng& rng) {
  return select_actions({z}, mode, rng)[0];
}

}  // namespace slotrl
