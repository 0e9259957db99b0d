#include "slotrl/gnn.hpp"

#include <cmath>
#include <stdexcept>

namespace slotrl {

CriticMode critic_mode_from(const std::string& s) {
  if (s == "composed") return CriticMode::composed;
  if (s == "direct") return CriticMode::direct;
  throw std::invalid_argument("critic_mode: '" + s + "' is not composed|direct");
}

std::string critic_mode_name(CriticMode m) {
  return m == CriticMode::composed ? "composed" : "direct";
}

namespace gnn {

namespace {

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w({fan_in, fan_out});
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.data) v = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

void init_mlp(ParamStore& params, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  int in = spec.in;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const int out = spec.hidden[l];
    const std::string i = std::to_string(l);
    params.add(prefix + "/w" + i, xavier_uniform(in, out, rng));
    params.add(prefix + "/b" + i, Tensor({static_cast<std::size_t>(out)}));
    if (spec.layer_norm) {
      params.add(prefix + "/g" + i, Tensor({static_cast<std::size_t>(out)}, 1.0));
      params.add(prefix + "/h" + i, Tensor({static_cast<std::size_t>(out)}));
    }
    in = out;
  }
  params.add(prefix + "/wo", xavier_uniform(in, spec.out, rng));
  params.add(prefix + "/bo", Tensor({static_cast<std::size_t>(spec.out)}));
}

std::vector<std::string> mlp_names(const std::string& prefix, const MlpSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::string i = std::to_string(l);
    names.push_back(prefix + "/w" + i);
    names.push_back(prefix + "/b" + i);
    if (spec.layer_norm) {
      names.push_back(prefix + "/g" + i);
      names.push_back(prefix + "/h" + i);
    }
  }
  names.push_back(prefix + "/wo");
  names.push_back(prefix + "/bo");
  return names;
}

NodeId mlp_forward(Graph& g, ParamNodes& p, const std::string& prefix, const MlpSpec& spec,
                   NodeId x) {
  NodeId h = x;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::string i = std::to_string(l);
    h = g.add_rowvec(g.matmul(h, p(prefix + "/w" + i)), p(prefix + "/b" + i));
    if (spec.layer_norm) {
      h = g.layer_norm(h);
      h = g.add_rowvec(g.mul_rowvec(h, p(prefix + "/g" + i)), p(prefix + "/h" + i));
    }
    h = g.relu(h);
  }
  return g.add_rowvec(g.matmul(h, p(prefix + "/wo")), p(prefix + "/bo"));
}

NodeId node_embeddings(Graph& g, ParamNodes& p, const std::string& prefix, const MlpSpec& edge,
                       const MlpSpec& node, NodeId z, NodeId a, int B, int K) {
  const std::size_t rows = static_cast<std::size_t>(B) * K;
  if (g.shape_of(z)[0] != rows)
    throw std::invalid_argument("node_embeddings: z rows " +
                                std::to_string(g.shape_of(z)[0]) + " != B*K");
  NodeId messages;
  if (K > 1) {
    std::vector<std::size_t> src_i, src_j, seg;
    src_i.reserve(rows * (K - 1));
    src_j.reserve(rows * (K - 1));
    seg.reserve(rows * (K - 1));
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          if (i == j) continue;
          src_i.push_back(static_cast<std::size_t>(b) * K + i);
          src_j.push_back(static_cast<std::size_t>(b) * K + j);
          seg.push_back(static_cast<std::size_t>(b) * K + i);
        }
    std::vector<NodeId> parts = {g.gather_rows(z, src_i), g.gather_rows(z, src_j)};
    if (a >= 0) parts.push_back(g.gather_rows(a, src_i));
    NodeId msg = mlp_forward(g, p, prefix + "/edge", edge, g.concat_cols(parts));
    messages = g.segment_sum_rows(msg, seg, rows);
  } else {
    // Empty neighbor sum: the zero vector.
    messages = g.constant(Tensor({rows, static_cast<std::size_t>(edge.out)}));
  }
  std::vector<NodeId> parts = {z};
  if (a >= 0) parts.push_back(a);
  parts.push_back(messages);
  return mlp_forward(g, p, prefix + "/node", node, g.concat_cols(parts));
}

NodeId mean_over_slots(Graph& g, NodeId emb, int B, int K) {
  const std::size_t rows = static_cast<std::size_t>(B) * K;
  std::vector<std::size_t> seg(rows);
  for (std::size_t r = 0; r < rows; ++r) seg[r] = r / K;
  return g.scale(g.segment_sum_rows(emb, std::move(seg), B), 1.0 / K);
}

}  // namespace gnn

int per_object_action_dim(const TaskSpec& spec) {
  const ActionSpace space = spec.action_space();
  return space.discrete ? 5 : space.dim;
}

Tensor encode_object_actions(const Action& action, const TaskSpec& spec) {
  const ActionSpace space = spec.action_space();
  const int k = spec.object_count;
  const int a_obj = per_object_action_dim(spec);
  Tensor out({static_cast<std::size_t>(k), static_cast<std::size_t>(a_obj)});
  if (space.discrete) {
    if (action.discrete < 0 || action.discrete >= space.count)
      throw std::invalid_argument("encode_object_actions: bad action index " +
                                  std::to_string(action.discrete));
    const DecodedAction dec = decode_action(action.discrete, spec);
    const int slot = dec.movable_rank + 1;
    out.at(slot, static_cast<int>(dec.dir)) = 1.0;
    out.at(slot, 4) = 1.0;  // selected flag
  } else {
    if (static_cast<int>(action.continuous.size()) != space.dim)
      throw std::invalid_argument("encode_object_actions: expected " +
                                  std::to_string(space.dim) + "-dof action");
    for (int slot = 0; slot < k; ++slot)
      for (int j = 0; j < a_obj; ++j) out.at(slot, j) = action.continuous[j];
  }
  return out;
}

Tensor batch_object_actions(const std::vector<Action>& actions, const TaskSpec& spec) {
  const int k = spec.object_count;
  const int a_obj = per_object_action_dim(spec);
  Tensor out({actions.size() * k, static_cast<std::size_t>(a_obj)});
  for (std::size_t b = 0; b < actions.size(); ++b) {
    const Tensor one = encode_object_actions(actions[b], spec);
    std::copy(one.data.begin(), one.data.end(),
              out.data.begin() + b * static_cast<std::size_t>(k) * a_obj);
  }
  return out;
}

Tensor all_actions_tile(const TaskSpec& spec) {
  const ActionSpace space = spec.action_space();
  if (!space.discrete)
    throw std::invalid_argument("all_actions_tile: discrete tasks only");
  std::vector<Action> actions;
  actions.reserve(space.count);
  for (int a = 0; a < space.count; ++a) actions.push_back(Action::index(a));
  return batch_object_actions(actions, spec);
}

GnnNets GnnNets::make(const TaskSpec& spec, int hidden_width) {
  GnnNets n;
  n.k = spec.object_count;
  n.d = feature_dim(spec);
  n.a_obj = per_object_action_dim(spec);
  n.width = hidden_width;
  const ActionSpace space = spec.action_space();
  n.discrete = space.discrete;
  n.n_actions = space.count;
  n.action_dim = space.dim;

  const int W = hidden_width;
  const std::vector<int> hh = {W, W};
  const int D = n.d, A = n.a_obj;

  n.tr_edge = {2 * D + A, hh, W, true};
  n.tr_node = {D + A + W, hh, D, true};
  n.rw_edge = {2 * D + A, hh, W, true};
  n.rw_node = {D + A + W, hh, W, true};
  n.rw_head = {W, hh, 1, true};
  n.v_edge = {2 * D, hh, W, true};
  n.v_node = {D + W, hh, W, true};
  n.v_head = {W, hh, 1, true};
  n.ac_edge = {2 * D, hh, W, true};
  n.ac_node = {D + W, hh, W, true};
  n.ac_head_pi = {W, hh, n.n_actions, true};
  n.ac_head_mu = {W, hh, n.action_dim, true};
  n.ac_head_logstd = {W, hh, n.action_dim, true};
  n.q_edge = {2 * D + A, hh, W, true};
  n.q_node = {D + A + W, hh, W, true};
  n.q_head = {W, hh, 1, true};
  return n;
}

void GnnNets::init_world_model(ParamStore& params, Rng& rng) const {
  gnn::init_mlp(params, "transition/edge", tr_edge, rng);
  gnn::init_mlp(params, "transition/node", tr_node, rng);
  gnn::init_mlp(params, "reward/edge", rw_edge, rng);
  gnn::init_mlp(params, "reward/node", rw_node, rng);
  gnn::init_mlp(params, "reward/head", rw_head, rng);
}

void GnnNets::init_value(ParamStore& params, const std::string& which, Rng& rng) const {
  gnn::init_mlp(params, which + "/edge", v_edge, rng);
  gnn::init_mlp(params, which + "/node", v_node, rng);
  gnn::init_mlp(params, which + "/head", v_head, rng);
}

void GnnNets::init_actor(ParamStore& params, Rng& rng) const {
  gnn::init_mlp(params, "actor/edge", ac_edge, rng);
  gnn::init_mlp(params, "actor/node", ac_node, rng);
  if (discrete) {
    gnn::init_mlp(params, "actor/pi", ac_head_pi, rng);
  } else {
    gnn::init_mlp(params, "actor/mu", ac_head_mu, rng);
    gnn::init_mlp(params, "actor/logstd", ac_head_logstd, rng);
  }
}

void GnnNets::init_q_direct(ParamStore& params, const std::string& which, Rng& rng) const {
  gnn::init_mlp(params, which + "/edge", q_edge, rng);
  gnn::init_mlp(params, which + "/node", q_node, rng);
  gnn::init_mlp(params, which + "/head", q_head, rng);
}

std::vector<std::string> GnnNets::world_model_names() const {
  std::vector<std::string> names;
  for (const auto& [prefix, spec] :
       std::vector<std::pair<std::string, gnn::MlpSpec>>{{"transition/edge", tr_edge},
                                                         {"transition/node", tr_node},
                                                         {"reward/edge", rw_edge},
                                                         {"reward/node", rw_node},
                                                         {"reward/head", rw_head}})
    for (auto& n : gnn::mlp_names(prefix, spec)) names.push_back(n);
  return names;
}

std::vector<std::string> GnnNets::value_names(const std::string& which) const {
  std::vector<std::string> names;
  for (const auto& [prefix, spec] : std::vector<std::pair<std::string, gnn::MlpSpec>>{
           {which + "/edge", v_edge}, {which + "/node", v_node}, {which + "/head", v_head}})
    for (auto& n : gnn::mlp_names(prefix, spec)) names.push_back(n);
  return names;
}

std::vector<std::string> GnnNets::actor_names() const {
  std::vector<std::pair<std::string, gnn::MlpSpec>> parts = {{"actor/edge", ac_edge},
                                                             {"actor/node", ac_node}};
  if (discrete) {
    parts.emplace_back("actor/pi", ac_head_pi);
  } else {
    parts.emplace_back("actor/mu", ac_head_mu);
    parts.emplace_back("actor/logstd", ac_head_logstd);
  }
  std::vector<std::string> names;
  for (const auto& [prefix, spec] : parts)
    for (auto& n : gnn::mlp_names(prefix, spec)) names.push_back(n);
  return names;
}

std::vector<std::string> GnnNets::q_direct_names(const std::string& which) const {
  std::vector<std::string> names;
  for (const auto& [prefix, spec] : std::vector<std::pair<std::string, gnn::MlpSpec>>{
           {which + "/edge", q_edge}, {which + "/node", q_node}, {which + "/head", q_head}})
    for (auto& n : gnn::mlp_names(prefix, spec)) names.push_back(n);
  return names;
}

NodeId transition_delta(Graph& g, gnn::ParamNodes& p, const GnnNets& nets, NodeId z, NodeId a,
                        int B) {
  return gnn::node_embeddings(g, p, "transition", nets.tr_edge, nets.tr_node, z, a, B, nets.k);
}

NodeId reward_scalar(Graph& g, gnn::ParamNodes& p, const GnnNets& nets, NodeId z, NodeId a,
                     int B) {
  NodeId emb = gnn::node_embeddings(g, p, "reward", nets.rw_edge, nets.rw_node, z, a, B, nets.k);
  return gnn::mlp_forward(g, p, "reward/head", nets.rw_head,
                          gnn::mean_over_slots(g, emb, B, nets.k));
}

NodeId value_scalar(Graph& g, gnn::ParamNodes& p, const GnnNets& nets, const std::string& which,
                    NodeId z, int B) {
  NodeId emb =
      gnn::node_embeddings(g, p, which, nets.v_edge, nets.v_node, z, /*a=*/-1, B, nets.k);
  return gnn::mlp_forward(g, p, which + "/head", nets.v_head,
                          gnn::mean_over_slots(g, emb, B, nets.k));
}

NodeId actor_logits(Graph& g, gnn::ParamNodes& p, const GnnNets& nets, NodeId z, int B) {
  NodeId emb =
      gnn::node_embeddings(g, p, "actor", nets.ac_edge, nets.ac_node, z, /*a=*/-1, B, nets.k);
  return gnn::mlp_forward(g, p, "actor/pi", nets.ac_head_pi,
                          gnn::mean_over_slots(g, emb, B, nets.k));
}

std::pair<NodeId, NodeId> actor_gaussian(Graph& g, gnn::ParamNodes& p, const GnnNets& nets,
                                         NodeId z, int B) {
  NodeId emb =
      gnn::node_embeddings(g, p, "actor", nets.ac_edge, nets.ac_node, z, /*a=*/-1, B, nets.k);
  NodeId pooled = gnn::mean_over_slots(g, emb, B, nets.k);
  NodeId mu = gnn::mlp_forward(g, p, "actor/mu", nets.ac_head_mu, pooled);
  NodeId log_std = g.clamp(gnn::mlp_forward(g, p, "actor/logstd", nets.ac_head_logstd, pooled),
                           kLogStdMin, kLogStdMax);
  return {mu, log_std};
}

NodeId q_direct_scalar(Graph& g, gnn::ParamNodes& p, const GnnNets& nets,
                       const std::string& which, NodeId z, NodeId a, int B) {
  NodeId emb = gnn::node_embeddings(g, p, which, nets.q_edge, nets.q_node, z, a, B, nets.k);
  return gnn::mlp_forward(g, p, which + "/head", nets.q_head,
                          gnn::mean_over_slots(g, emb, B, nets.k));
}

}  // namespace slotrl
