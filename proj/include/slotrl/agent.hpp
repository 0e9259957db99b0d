#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slotrl/gnn.hpp"
#include "slotrl/gnn_fast.hpp"
#include "slotrl/optim.hpp"
#include "slotrl/replay.hpp"

namespace slotrl {

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  // NaN selects the task default: 0.6*ln(n) discrete, -action_dim continuous.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double beta_t = 1.0;
  double beta_r = 1.0;
  double lr_world = 3e-4;
  double lr_critic = 3e-4;
  double lr_actor = 3e-4;
  double lr_alpha = 3e-4;
  CriticMode critic_mode = CriticMode::composed;
  int batch_size = 128;
  double update_ratio = 1.0;
  int hidden_width = 512;
  int prefill = 5000;
  double alpha_init = 1.0;
};

enum class PolicyMode { stochastic, deterministic };

struct UpdateMetrics {
  double world_loss = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
};

// Reparameterization noise for continuous tasks, one row per batch element.
// Fixing it makes every loss a deterministic function of (params, batch).
struct UpdateNoise {
  Tensor actor_eps;   // (B, action_dim)
  Tensor target_eps;  // (B, action_dim)
};

// Model-based soft actor-critic over factored states: GNN transition, reward,
// state-value and actor networks, a composed critic Q = R + gamma*V(z+dz),
// double-Q via two value networks with polyak-averaged targets, and automatic
// temperature tuning. critic_mode direct swaps the composed critic for a pair
// of action-conditioned GNN Q-networks and drops the world model (model-free).
class Agent {
 public:
  Agent(const TaskSpec& spec, AgentConfig cfg, Rng& init_rng);

  const TaskSpec& task() const { return spec_; }
  const AgentConfig& config() const { return cfg_; }
  const GnnNets& nets() const { return nets_; }
  bool discrete() const { return nets_.discrete; }

  // --- forward-only queries ------------------------------------------------
  double critic_q(const FactoredState& z, const Action& a, int which, bool use_target);
  double soft_value_discrete(const FactoredState& z, bool use_target = false);
  double soft_value_continuous(const FactoredState& z, Rng& rng, int sample_count = 1,
                               bool use_target = false);
  std::vector<double> policy_discrete(const FactoredState& z);
  std::pair<std::vector<double>, std::vector<double>> policy_gaussian(const FactoredState& z);
  Tensor predict_next(const FactoredState& z, const Action& a);  // (K, D)
  double predict_reward(const FactoredState& z, const Action& a);

  // --- losses (deterministic given params, batch and noise) ----------------
  double world_model_loss(const std::vector<TransitionRecord>& batch);
  double critic_loss(const std::vector<TransitionRecord>& batch,
                     const UpdateNoise* noise = nullptr);
  double actor_loss(const std::vector<TransitionRecord>& batch,
                    const UpdateNoise* noise = nullptr);
  double temperature_loss(const std::vector<TransitionRecord>& batch,
                          const UpdateNoise* noise = nullptr);

  GradMap world_model_grads(const std::vector<TransitionRecord>& batch, double* loss = nullptr);
  GradMap critic_grads(const std::vector<TransitionRecord>& batch,
                       const UpdateNoise* noise = nullptr, double* loss = nullptr);
  GradMap actor_grads(const std::vector<TransitionRecord>& batch,
                      const UpdateNoise* noise = nullptr, double* loss = nullptr);
  GradMap temperature_grads(const std::vector<TransitionRecord>& batch,
                            const UpdateNoise* noise = nullptr, double* loss = nullptr);

  // --- training ------------------------------------------------------------
  UpdateMetrics update(ReplayBuffer& replay, Rng& rng);
  double world_model_update(const std::vector<TransitionRecord>& batch);
  Action select_action(const FactoredState& z, PolicyMode mode, Rng& rng);
  std::vector<Action> select_actions(const std::vector<FactoredState>& zs, PolicyMode mode,
                                     Rng& rng);
  UpdateNoise sample_noise(int batch, Rng& rng) const;

  double alpha() const { return std::exp(online_.get("log_alpha").item()); }
  double target_entropy() const { return cfg_.target_entropy; }

  // --- state access for checkpointing and tests ----------------------------
  ParamStore& params() { return online_; }
  const ParamStore& params() const { return online_; }
  ParamStore& target_params() { return target_; }
  const ParamStore& target_params() const { return target_; }
  Adam& world_optimizer() { return opt_world_; }
  Adam& critic_optimizer() { return opt_critic_; }
  Adam& actor_optimizer() { return opt_actor_; }
  Adam& alpha_optimizer() { return opt_alpha_; }
  std::vector<std::string> critic_param_names() const;
  std::vector<std::string> world_param_names() const;

  // Tests that hand-craft tiny networks re-shape the MLP catalog first and
  // then rebuild parameters through this hook.
  void rebuild_with_nets(const GnnNets& nets, Rng& init_rng);

 private:
  struct LossGraph {
    int batch = -1;
    Graph g;
    NodeId out = -1;
    NodeId aux = -1;   // actor graph: pi/log-pi style secondary output
    NodeId aux2 = -1;
    std::vector<std::string> param_names;
  };

  void init_params(Rng& rng);
  void bind_params(Bindings& b, const std::vector<std::string>& names, bool value_from_target);
  std::string value_prefix(int which) const;  // value1/value2 or q1/q2

  // (B, n) min over the double critic of Q(z, every action); discrete only.
  NodeId q_sweep_all_actions(Graph& g, gnn::ParamNodes& p, NodeId z, int B);
  // (B, 1) min over the double critic of Q(z, a).
  NodeId q_min_single(Graph& g, gnn::ParamNodes& p, NodeId z, NodeId a_enc, int B);
  // Tanh-squashed reparameterized sample and its log-density, (B, dim)/(B, 1).
  struct SampledAction {
    NodeId a;
    NodeId log_pi;
  };
  SampledAction sample_squashed(Graph& g, gnn::ParamNodes& p, NodeId z, NodeId eps, int B);

  LossGraph& target_graph(int B);
  LossGraph& critic_graph(int B);
  LossGraph& actor_graph(int B);
  LossGraph& temp_graph(int B);
  LossGraph& world_graph(int B);
  LossGraph& policy_graph(int B);

  Tensor compute_targets(const std::vector<TransitionRecord>& batch, const UpdateNoise* noise);

  struct BatchTensors {
    Tensor z, a, z_next, r, not_done;
  };
  BatchTensors pack(const std::vector<TransitionRecord>& batch) const;

  TaskSpec spec_;
  AgentConfig cfg_;
  GnnNets nets_;
  ParamStore online_;
  ParamStore target_;
  Adam opt_world_, opt_critic_, opt_actor_, opt_alpha_;
  LossGraph target_g_, critic_g_, actor_g_, temp_g_, world_g_, policy_g_;
  std::unique_ptr<FastDiscreteCritic> fast_;
  FastDiscreteCritic& fast();
};

}  // namespace slotrl
