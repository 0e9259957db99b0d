#pragma once

#include <vector>

#include "slotrl/gnn.hpp"

namespace slotrl {

// Forward-only fused MLP: one GEMM per layer plus a single pass applying
// bias, layer norm, the norm affine and relu together. No gradients.
class FastMlp {
 public:
  FastMlp() = default;
  FastMlp(const ParamStore& params, const std::string& prefix, const gnn::MlpSpec& spec);

  void forward(const double* x, std::size_t rows, double* out) const;
  int out_dim() const { return spec_.out; }
  int in_dim() const { return spec_.in; }

 private:
  struct Layer {
    const Tensor* w = nullptr;
    const Tensor* b = nullptr;
    const Tensor* g = nullptr;
    const Tensor* h = nullptr;
  };
  gnn::MlpSpec spec_;
  std::vector<Layer> hidden_;
  const Tensor* wo_ = nullptr;
  const Tensor* bo_ = nullptr;
  mutable std::vector<double> buf_a_, buf_b_;
};

// Forward-only evaluator for the discrete all-action critic sweep and the
// actor forward. Exploits the per-object action layout: rows not touching
// the addressed movable are identical across actions and computed once.
class FastDiscreteCritic {
 public:
  FastDiscreteCritic(const TaskSpec& spec, const GnnNets& nets, CriticMode mode, double gamma);

  // Resolves parameter tensors; value_store supplies the value (or direct-Q)
  // networks so callers choose online vs target copies.
  void bind(const ParamStore& online, const ParamStore& value_store);

  // z: (B*K x D) factored states. Returns (B x n): min over the double
  // critic of Q(z, a) for every action.
  const Tensor& min_q_all_actions(const Tensor& z, int B);

  // Actor GNN forward, (B x n) logits.
  const Tensor& actor_logits(const Tensor& z, int B);

 private:
  void null_pass_world(const Tensor& z, int B);
  void action_pass_world(const Tensor& z, int B);
  void value_net(const Tensor& zp0, int B, const FastMlp& edge, const FastMlp& node,
                 const FastMlp& head, std::vector<double>* head_out);

  TaskSpec task_;
  GnnNets nets_;
  CriticMode mode_;
  double gamma_;

  FastMlp tr_edge_, tr_node_, rw_edge_, rw_node_, rw_head_;
  FastMlp v1_edge_, v1_node_, v1_head_, v2_edge_, v2_node_, v2_head_;
  FastMlp q1_edge_, q1_node_, q1_head_, q2_edge_, q2_node_, q2_head_;
  FastMlp ac_edge_, ac_node_, ac_head_;

  // action table: movable slot and direction features per action
  std::vector<int> action_slot_;
  Tensor action_feat_;  // (n x 5)

  // scratch
  std::vector<double> null_edge_in_, null_msg_, null_sum_, null_node_in_, delta0_;
  std::vector<double> act_edge_in_, act_msg_, act_sum_, act_node_in_, delta_m_;
  std::vector<double> emb0_, emb_m_, pooled_, head_in_;
  std::vector<double> zp0_, zpm_;
  std::vector<double> v_edge_in_, v_e0_, v_e1_, v_sum0_, v_node_in_, v_emb_, v_pool_;
  std::vector<double> ac_edge_in_, ac_msg_, ac_sum_, ac_node_in_, ac_emb_, ac_pool_;
  Tensor q_out_;
  Tensor logits_out_;
};

}  // namespace slotrl
