#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slotrl/encoder.hpp"
#include "slotrl/env.hpp"
#include "slotrl/graph.hpp"
#include "slotrl/params.hpp"
#include "slotrl/rng.hpp"

namespace slotrl {

enum class CriticMode { composed, direct };
CriticMode critic_mode_from(const std::string& s);
std::string critic_mode_name(CriticMode m);

namespace gnn {

struct MlpSpec {
  int in = 0;
  std::vector<int> hidden;  // width per hidden layer
  int out = 0;
  bool layer_norm = true;
};

void init_mlp(ParamStore& params, const std::string& prefix, const MlpSpec& spec, Rng& rng);
std::vector<std::string> mlp_names(const std::string& prefix, const MlpSpec& spec);

// Lazily creates one graph input node per parameter name.
class ParamNodes {
 public:
  ParamNodes(Graph& g, const ParamStore& shapes) : g_(g), shapes_(shapes) {}

  NodeId operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    NodeId id = g_.input(name, shapes_.get(name).shape);
    cache_.emplace(name, id);
    used_.push_back(name);
    return id;
  }

  const std::vector<std::string>& used() const { return used_; }

 private:
  Graph& g_;
  const ParamStore& shapes_;
  std::unordered_map<std::string, NodeId> cache_;
  std::vector<std::string> used_;
};

NodeId mlp_forward(Graph& g, ParamNodes& p, const std::string& prefix, const MlpSpec& spec,
                   NodeId x);

// Shared-weight message passing over the complete graph on K slots for a
// batch of B instances. z is (B*K, D); a is (B*K, A) or -1 for action-free
// networks. Returns per-slot node-model outputs, (B*K, node.out).
NodeId node_embeddings(Graph& g, ParamNodes& p, const std::string& prefix, const MlpSpec& edge,
                       const MlpSpec& node, NodeId z, NodeId a, int B, int K);

NodeId mean_over_slots(Graph& g, NodeId emb, int B, int K);

}  // namespace gnn

// Per-object action features. Discrete grid actions mark the addressed
// movable's slot with [direction one-hot, selected]; continuous actions
// broadcast the full action vector to every slot.
int per_object_action_dim(const TaskSpec& spec);
Tensor encode_object_actions(const Action& action, const TaskSpec& spec);     // (K, A_obj)
Tensor batch_object_actions(const std::vector<Action>& actions, const TaskSpec& spec);
Tensor all_actions_tile(const TaskSpec& spec);  // (n*K, A_obj), rows grouped by action

constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;

// Network shape catalog for one task and hidden width.
struct GnnNets {
  int k = 0, d = 0, a_obj = 0, width = 0;
  bool discrete = true;
  int n_actions = 0;   // discrete
  int action_dim = 0;  // continuous

  gnn::MlpSpec tr_edge, tr_node;
  gnn::MlpSpec rw_edge, rw_node, rw_head;
  gnn::MlpSpec v_edge, v_node, v_head;
  gnn::MlpSpec ac_edge, ac_node, ac_head_pi, ac_head_mu, ac_head_logstd;
  gnn::MlpSpec q_edge, q_node, q_head;  // action-conditioned direct critic

  static GnnNets make(const TaskSpec& spec, int hidden_width);

  void init_world_model(ParamStore& params, Rng& rng) const;
  void init_value(ParamStore& params, const std::string& which, Rng& rng) const;
  void init_actor(ParamStore& params, Rng& rng) const;
  void init_q_direct(ParamStore& params, const std::string& which, Rng& rng) const;

  std::vector<std::string> world_model_names() const;
  std::vector<std::string> value_names(const std::string& which) const;
  std::vector<std::string> actor_names() const;
  std::vector<std::string> q_direct_names(const std::string& which) const;
};

// Graph builders; z is (B*K, D), a is (B*K, A_obj).
NodeId transition_delta(Graph& g, gnn::ParamNodes& p, const GnnNets& nets, NodeId z, NodeId a,
                        int B);                                                  // (B*K, D)
NodeId reward_scalar(Graph& g, gnn::ParamNodes& p, const GnnNets& nets, NodeId z, NodeId a,
                     int B);                                                     // (B, 1)
NodeId value_scalar(Graph& g, gnn::ParamNodes& p, const GnnNets& nets,
                    const std::string& which, NodeId z, int B);                  // (B, 1)
NodeId actor_logits(Graph& g, gnn::ParamNodes& p, const GnnNets& nets, NodeId z, int B);
std::pair<NodeId, NodeId> actor_gaussian(Graph& g, gnn::ParamNodes& p, const GnnNets& nets,
                                         NodeId z, int B);  // mu, log_std (B, dim)
NodeId q_direct_scalar(Graph& g, gnn::ParamNodes& p, const GnnNets& nets,
                       const std::string& which, NodeId z, NodeId a, int B);     // (B, 1)

}  // namespace slotrl
