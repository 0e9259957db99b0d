#include "slotrl/gnn_fast.hpp"

#include <cmath>
#include <thread>
#include <cstring>
#include <stdexcept>

namespace slotrl {

namespace {

void fill_zero(std::vector<double>& v, std::size_t n) {
  v.assign(n, 0.0);
}

}  // namespace

FastMlp::FastMlp(const ParamStore& params, const std::string& prefix,
                 const gnn::MlpSpec& spec)
    : spec_(spec) {
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::string i = std::to_string(l);
    Layer layer;
    layer.w = &params.get(prefix + "/w" + i);
    layer.b = &params.get(prefix + "/b" + i);
    if (spec.layer_norm) {
      layer.g = &params.get(prefix + "/g" + i);
      layer.h = &params.get(prefix + "/h" + i);
    }
    hidden_.push_back(layer);
  }
  wo_ = &params.get(prefix + "/wo");
  bo_ = &params.get(prefix + "/bo");
}

namespace {

// Contiguous row split across worker threads; disjoint outputs keep results
// bitwise independent of the thread count.
template <typename Fn>
void parallel_rows(std::size_t rows, const Fn& fn) {
  const int workers = compute_threads();
  if (workers < 2 || rows < 1024) {
    fn(0, rows);
    return;
  }
  const std::size_t mid = rows / 2;
  std::thread other([&] { fn(mid, rows); });
  fn(0, mid);
  other.join();
}

}  // namespace

void FastMlp::forward(const double* x, std::size_t rows, double* out) const {
  const double* cur = x;
  std::size_t cur_dim = static_cast<std::size_t>(spec_.in);
  std::vector<double>* dst = &buf_a_;
  for (const Layer& layer : hidden_) {
    const std::size_t width = layer.w->shape[1];
    fill_zero(*dst, rows * width);
    const double* b = layer.b->data.data();
    const double* g = spec_.layer_norm ? layer.g->data.data() : nullptr;
    const double* h = spec_.layer_norm ? layer.h->data.data() : nullptr;
    const double wN = static_cast<double>(width);
    double* dd = dst->data();
    parallel_rows(rows, [&](std::size_t r0, std::size_t r1) {
      if (r0 == r1) return;
      gemm_nn(r1 - r0, cur_dim, width, cur + r0 * cur_dim, layer.w->data.data(),
              dd + r0 * width);
      for (std::size_t r = r0; r < r1; ++r) {
        double* row = dd + r * width;
        if (spec_.layer_norm) {
          double mean = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            row[j] += b[j];
            mean += row[j];
          }
          mean /= wN;
          double var = 0.0;
          for (std::size_t j = 0; j < width; ++j) var += (row[j] - mean) * (row[j] - mean);
          var /= wN;
          const double inv = 1.0 / std::sqrt(var + Graph::kLayerNormEps);
          for (std::size_t j = 0; j < width; ++j) {
            const double y = (row[j] - mean) * inv * g[j] + h[j];
            row[j] = y > 0.0 ? y : 0.0;
          }
        } else {
          for (std::size_t j = 0; j < width; ++j) {
            const double y = row[j] + b[j];
            row[j] = y > 0.0 ? y : 0.0;
          }
        }
      }
    });
    cur = dd;
    cur_dim = width;
    dst = dst == &buf_a_ ? &buf_b_ : &buf_a_;
  }
  const std::size_t od = static_cast<std::size_t>(spec_.out);
  std::memset(out, 0, rows * od * sizeof(double));
  const double* bo = bo_->data.data();
  parallel_rows(rows, [&](std::size_t r0, std::size_t r1) {
    if (r0 == r1) return;
    gemm_nn(r1 - r0, cur_dim, od, cur + r0 * cur_dim, wo_->data.data(), out + r0 * od);
    for (std::size_t r = r0; r < r1; ++r) {
      double* row = out + r * od;
      for (std::size_t j = 0; j < od; ++j) row[j] += bo[j];
    }
  });
}

FastDiscreteCritic::FastDiscreteCritic(const TaskSpec& spec, const GnnNets& nets,
                                       CriticMode mode, double gamma)
    : task_(spec), nets_(nets), mode_(mode), gamma_(gamma) {
  if (!nets.discrete)
    throw std::invalid_argument("FastDiscreteCritic: discrete tasks only");
  const int n = nets_.n_actions;
  action_slot_.resize(n);
  action_feat_ = Tensor({static_cast<std::size_t>(n), 5});
  for (int a = 0; a < n; ++a) {
    const DecodedAction dec = decode_action(a, task_);
    action_slot_[a] = dec.movable_rank + 1;
    action_feat_.at(a, static_cast<int>(dec.dir)) = 1.0;
    action_feat_.at(a, 4) = 1.0;
  }
}

void FastDiscreteCritic::bind(const ParamStore& online, const ParamStore& value_store) {
  if (mode_ == CriticMode::composed) {
    tr_edge_ = FastMlp(online, "transition/edge", nets_.tr_edge);
    tr_node_ = FastMlp(online, "transition/node", nets_.tr_node);
    rw_edge_ = FastMlp(online, "reward/edge", nets_.rw_edge);
    rw_node_ = FastMlp(online, "reward/node", nets_.rw_node);
    rw_head_ = FastMlp(online, "reward/head", nets_.rw_head);
    v1_edge_ = FastMlp(value_store, "value1/edge", nets_.v_edge);
    v1_node_ = FastMlp(value_store, "value1/node", nets_.v_node);
    v1_head_ = FastMlp(value_store, "value1/head", nets_.v_head);
    v2_edge_ = FastMlp(value_store, "value2/edge", nets_.v_edge);
    v2_node_ = FastMlp(value_store, "value2/node", nets_.v_node);
    v2_head_ = FastMlp(value_store, "value2/head", nets_.v_head);
  } else {
    q1_edge_ = FastMlp(value_store, "q1/edge", nets_.q_edge);
    q1_node_ = FastMlp(value_store, "q1/node", nets_.q_node);
    q1_head_ = FastMlp(value_store, "q1/head", nets_.q_head);
    q2_edge_ = FastMlp(value_store, "q2/edge", nets_.q_edge);
    q2_node_ = FastMlp(value_store, "q2/node", nets_.q_node);
    q2_head_ = FastMlp(value_store, "q2/head", nets_.q_head);
  }
  ac_edge_ = FastMlp(online, "actor/edge", nets_.ac_edge);
  ac_node_ = FastMlp(online, "actor/node", nets_.ac_node);
  ac_head_ = FastMlp(online, "actor/pi", nets_.ac_head_pi);
}

// Row index of ordered pair (i, j), j != i, within one instance block.
static inline std::size_t pair_row(int k, int i, int j) {
  return static_cast<std::size_t>(i) * (k - 1) + (j < i ? j : j - 1);
}

void FastDiscreteCritic::null_pass_world(const Tensor& z, int B) {
  const int K = nets_.k, D = nets_.d, A = nets_.a_obj, W = nets_.width;
  const std::size_t rows = static_cast<std::size_t>(B) * K * (K - 1);
  const std::size_t ein = static_cast<std::size_t>(2 * D + A);

  fill_zero(null_edge_in_, rows * ein);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        if (i == j) continue;
        double* row = null_edge_in_.data() +
                      (static_cast<std::size_t>(b) * K * (K - 1) + pair_row(K, i, j)) * ein;
        const double* zi = z.data.data() + (static_cast<std::size_t>(b) * K + i) * D;
        const double* zj = z.data.data() + (static_cast<std::size_t>(b) * K + j) * D;
        std::memcpy(row, zi, D * sizeof(double));
        std::memcpy(row + D, zj, D * sizeof(double));
        // action block stays zero
      }
}

void FastDiscreteCritic::action_pass_world(const Tensor& z, int B) {
  const int K = nets_.k, D = nets_.d, A = nets_.a_obj;
  const int n = nets_.n_actions;
  const std::size_t rows = static_cast<std::size_t>(B) * n * (K - 1);
  const std::size_t ein = static_cast<std::size_t>(2 * D + A);

  fill_zero(act_edge_in_, rows * ein);
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < n; ++a) {
      const int m = action_slot_[a];
      const double* zm = z.data.data() + (static_cast<std::size_t>(b) * K + m) * D;
      const double* feat = action_feat_.data.data() + static_cast<std::size_t>(a) * A;
      std::size_t rr = 0;
      for (int j = 0; j < K; ++j) {
        if (j == m) continue;
        double* row = act_edge_in_.data() +
                      ((static_cast<std::size_t>(b) * n + a) * (K - 1) + rr) * ein;
        const double* zj = z.data.data() + (static_cast<std::size_t>(b) * K + j) * D;
        std::memcpy(row, zm, D * sizeof(double));
        std::memcpy(row + D, zj, D * sizeof(double));
        std::memcpy(row + 2 * D, feat, A * sizeof(double));
        ++rr;
      }
    }
}

const Tensor& FastDiscreteCritic::min_q_all_actions(const Tensor& z, int B) {
  const int K = nets_.k, D = nets_.d, A = nets_.a_obj, W = nets_.width;
  const int n = nets_.n_actions;
  const std::size_t BK = static_cast<std::size_t>(B) * K;
  const std::size_t Bn = static_cast<std::size_t>(B) * n;
  const std::size_t edge_rows = BK * (K - 1);
  const std::size_t act_rows = Bn * (K - 1);

  null_pass_world(z, B);
  action_pass_world(z, B);
  q_out_ = Tensor({static_cast<std::size_t>(B), static_cast<std::size_t>(n)});

  auto segment_sums = [&](const std::vector<double>& msg, std::size_t groups,
                          std::size_t width, std::size_t group_size,
                          std::vector<double>& out) {
    fill_zero(out, groups * width);
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
      double* dst = out.data() + gidx * width;
      const double* src = msg.data() + gidx * group_size * width;
      for (std::size_t r = 0; r < group_size; ++r)
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[r * width + j];
    }
  };

  if (mode_ == CriticMode::direct) {
    // Same incremental structure as the reward net, per Q network.
    std::vector<double>* outs[2] = {&pooled_, &head_in_};  // reuse as q1/q2 rows
    const FastMlp* edges[2] = {&q1_edge_, &q2_edge_};
    const FastMlp* nodes[2] = {&q1_node_, &q2_node_};
    const FastMlp* heads[2] = {&q1_head_, &q2_head_};
    for (int which = 0; which < 2; ++which) {
      null_msg_.resize(edge_rows * W);
      edges[which]->forward(null_edge_in_.data(), edge_rows, null_msg_.data());
      segment_sums(null_msg_, BK, W, K - 1, null_sum_);
      const std::size_t nin = static_cast<std::size_t>(D + A + W);
      fill_zero(null_node_in_, BK * nin);
      for (std::size_t r = 0; r < BK; ++r) {
        double* row = null_node_in_.data() + r * nin;
        std::memcpy(row, z.data.data() + r * D, D * sizeof(double));
        std::memcpy(row + D + A, null_sum_.data() + r * W, W * sizeof(double));
      }
      emb0_.resize(BK * W);
      nodes[which]->forward(null_node_in_.data(), BK, emb0_.data());

      act_msg_.resize(act_rows * W);
      edges[which]->forward(act_edge_in_.data(), act_rows, act_msg_.data());
      segment_sums(act_msg_, Bn, W, K - 1, act_sum_);
      fill_zero(act_node_in_, Bn * nin);
      for (int b = 0; b < B; ++b)
        for (int a = 0; a < n; ++a) {
          const int m = action_slot_[a];
          double* row = act_node_in_.data() + (static_cast<std::size_t>(b) * n + a) * nin;
          std::memcpy(row, z.data.data() + (static_cast<std::size_t>(b) * K + m) * D,
                      D * sizeof(double));
          std::memcpy(row + D, action_feat_.data.data() + static_cast<std::size_t>(a) * A,
                      A * sizeof(double));
          std::memcpy(row + D + A, act_sum_.data() + (static_cast<std::size_t>(b) * n + a) * W,
                      W * sizeof(double));
        }
      emb_m_.resize(Bn * W);
      nodes[which]->forward(act_node_in_.data(), Bn, emb_m_.data());

      // pooled mean per (b, a): swap the addressed slot's embedding
      v_pool_.resize(Bn * W);
      for (int b = 0; b < B; ++b) {
        double base[512];
        double* base_sum = W <= 512 ? base : nullptr;
        std::vector<double> big;
        if (!base_sum) {
          big.resize(W);
          base_sum = big.data();
        }
        std::memset(base_sum, 0, W * sizeof(double));
        for (int i = 0; i < K; ++i) {
          const double* e = emb0_.data() + (static_cast<std::size_t>(b) * K + i) * W;
          for (int j = 0; j < W; ++j) base_sum[j] += e[j];
        }
        for (int a = 0; a < n; ++a) {
          const int m = action_slot_[a];
          const double* e0m = emb0_.data() + (static_cast<std::size_t>(b) * K + m) * W;
          const double* em = emb_m_.data() + (static_cast<std::size_t>(b) * n + a) * W;
          double* dst = v_pool_.data() + (static_cast<std::size_t>(b) * n + a) * W;
          for (int j = 0; j < W; ++j) dst[j] = (base_sum[j] - e0m[j] + em[j]) / K;
        }
      }
      outs[which]->resize(Bn);
      heads[which]->forward(v_pool_.data(), Bn, outs[which]->data());
    }
    for (std::size_t i = 0; i < Bn; ++i)
      q_out_.data[i] = std::min((*outs[0])[i], (*outs[1])[i]);
    return q_out_;
  }

  // --- composed mode ---
  // transition null pass
  null_msg_.resize(edge_rows * W);
  tr_edge_.forward(null_edge_in_.data(), edge_rows, null_msg_.data());
  segment_sums(null_msg_, BK, W, K - 1, null_sum_);
  const std::size_t nin = static_cast<std::size_t>(D + A + W);
  fill_zero(null_node_in_, BK * nin);
  for (std::size_t r = 0; r < BK; ++r) {
    double* row = null_node_in_.data() + r * nin;
    std::memcpy(row, z.data.data() + r * D, D * sizeof(double));
    std::memcpy(row + D + A, null_sum_.data() + r * W, W * sizeof(double));
  }
  delta0_.resize(BK * D);
  tr_node_.forward(null_node_in_.data(), BK, delta0_.data());

  // transition action rows
  act_msg_.resize(act_rows * W);
  tr_edge_.forward(act_edge_in_.data(), act_rows, act_msg_.data());
  segment_sums(act_msg_, Bn, W, K - 1, act_sum_);
  fill_zero(act_node_in_, Bn * nin);
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < n; ++a) {
      const int m = action_slot_[a];
      double* row = act_node_in_.data() + (static_cast<std::size_t>(b) * n + a) * nin;
      std::memcpy(row, z.data.data() + (static_cast<std::size_t>(b) * K + m) * D,
                  D * sizeof(double));
      std::memcpy(row + D, action_feat_.data.data() + static_cast<std::size_t>(a) * A,
                  A * sizeof(double));
      std::memcpy(row + D + A, act_sum_.data() + (static_cast<std::size_t>(b) * n + a) * W,
                  W * sizeof(double));
    }
  delta_m_.resize(Bn * D);
  tr_node_.forward(act_node_in_.data(), Bn, delta_m_.data());

  // reward: same two passes with the reward nets
  rw_edge_.forward(null_edge_in_.data(), edge_rows, null_msg_.data());
  segment_sums(null_msg_, BK, W, K - 1, null_sum_);
  for (std::size_t r = 0; r < BK; ++r)
    std::memcpy(null_node_in_.data() + r * nin + D + A, null_sum_.data() + r * W,
                W * sizeof(double));
  emb0_.resize(BK * W);
  rw_node_.forward(null_node_in_.data(), BK, emb0_.data());
  rw_edge_.forward(act_edge_in_.data(), act_rows, act_msg_.data());
  segment_sums(act_msg_, Bn, W, K - 1, act_sum_);
  for (std::size_t r = 0; r < Bn; ++r)
    std::memcpy(act_node_in_.data() + r * nin + D + A, act_sum_.data() + r * W,
                W * sizeof(double));
  emb_m_.resize(Bn * W);
  rw_node_.forward(act_node_in_.data(), Bn, emb_m_.data());

  pooled_.resize(Bn * W);
  for (int b = 0; b < B; ++b) {
    std::vector<double> base_sum(W, 0.0);
    for (int i = 0; i < K; ++i) {
      const double* e = emb0_.data() + (static_cast<std::size_t>(b) * K + i) * W;
      for (int j = 0; j < W; ++j) base_sum[j] += e[j];
    }
    for (int a = 0; a < n; ++a) {
      const int m = action_slot_[a];
      const double* e0m = emb0_.data() + (static_cast<std::size_t>(b) * K + m) * W;
      const double* em = emb_m_.data() + (static_cast<std::size_t>(b) * n + a) * W;
      double* dst = pooled_.data() + (static_cast<std::size_t>(b) * n + a) * W;
      for (int j = 0; j < W; ++j) dst[j] = (base_sum[j] - e0m[j] + em[j]) / K;
    }
  }
  head_in_.resize(Bn);
  rw_head_.forward(pooled_.data(), Bn, head_in_.data());
  std::vector<double> rhat = head_in_;  // (B*n)

  // predicted next states
  zp0_.resize(BK * D);
  for (std::size_t i = 0; i < BK * D; ++i) zp0_[i] = z.data[i] + delta0_[i];
  zpm_.resize(Bn * D);
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < n; ++a) {
      const int m = action_slot_[a];
      const double* zm = z.data.data() + (static_cast<std::size_t>(b) * K + m) * D;
      const double* dm = delta_m_.data() + (static_cast<std::size_t>(b) * n + a) * D;
      double* dst = zpm_.data() + (static_cast<std::size_t>(b) * n + a) * D;
      for (int j = 0; j < D; ++j) dst[j] = zm[j] + dm[j];
    }

  Tensor zp0t({BK, static_cast<std::size_t>(D)});
  zp0t.data.assign(zp0_.begin(), zp0_.end());

  std::vector<double> v1, v2;
  value_net(zp0t, B, v1_edge_, v1_node_, v1_head_, &v1);
  value_net(zp0t, B, v2_edge_, v2_node_, v2_head_, &v2);

  for (std::size_t i = 0; i < Bn; ++i)
    q_out_.data[i] = rhat[i] + gamma_ * std::min(v1[i], v2[i]);
  return q_out_;
}

void FastDiscreteCritic::value_net(const Tensor& zp0, int B, const FastMlp& edge,
                                   const FastMlp& node, const FastMlp& head,
                                   std::vector<double>* head_out) {
  const int K = nets_.k, D = nets_.d, W = nets_.width;
  const int n = nets_.n_actions;
  const std::size_t BK = static_cast<std::size_t>(B) * K;
  const std::size_t Bn = static_cast<std::size_t>(B) * n;
  const std::size_t ein = static_cast<std::size_t>(2 * D);
  const std::size_t edge_rows = BK * (K - 1);

  // null pass at the null-action prediction
  v_edge_in_.resize(edge_rows * ein);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        if (i == j) continue;
        double* row = v_edge_in_.data() +
                      (static_cast<std::size_t>(b) * K * (K - 1) + pair_row(K, i, j)) * ein;
        std::memcpy(row, zp0.data.data() + (static_cast<std::size_t>(b) * K + i) * D,
                    D * sizeof(double));
        std::memcpy(row + D, zp0.data.data() + (static_cast<std::size_t>(b) * K + j) * D,
                    D * sizeof(double));
      }
  v_e0_.resize(edge_rows * W);
  edge.forward(v_edge_in_.data(), edge_rows, v_e0_.data());
  fill_zero(v_sum0_, BK * W);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < K; ++i) {
      double* dst = v_sum0_.data() + (static_cast<std::size_t>(b) * K + i) * W;
      for (int j = 0; j < K; ++j) {
        if (i == j) continue;
        const double* e = v_e0_.data() +
                          (static_cast<std::size_t>(b) * K * (K - 1) + pair_row(K, i, j)) * W;
        for (int w = 0; w < W; ++w) dst[w] += e[w];
      }
    }

  // per-action edge rows: 4 outgoing from the addressed slot, 4 incoming
  const std::size_t act_rows = Bn * 2 * (K - 1);
  v_edge_in_.resize(act_rows * ein);
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < n; ++a) {
      const int m = action_slot_[a];
      const double* zm = zpm_.data() + (static_cast<std::size_t>(b) * n + a) * D;
      std::size_t rr = (static_cast<std::size_t>(b) * n + a) * 2 * (K - 1);
      for (int j = 0; j < K; ++j) {
        if (j == m) continue;
        double* row = v_edge_in_.data() + rr * ein;
        std::memcpy(row, zm, D * sizeof(double));
        std::memcpy(row + D, zp0.data.data() + (static_cast<std::size_t>(b) * K + j) * D,
                    D * sizeof(double));
        ++rr;
      }
      for (int i = 0; i < K; ++i) {
        if (i == m) continue;
        double* row = v_edge_in_.data() + rr * ein;
        std::memcpy(row, zp0.data.data() + (static_cast<std::size_t>(b) * K + i) * D,
                    D * sizeof(double));
        std::memcpy(row + D, zm, D * sizeof(double));
        ++rr;
      }
    }
  v_e1_.resize(act_rows * W);
  edge.forward(v_edge_in_.data(), act_rows, v_e1_.data());

  // node inputs for every (b, a, i)
  const std::size_t nin = static_cast<std::size_t>(D + W);
  v_node_in_.resize(Bn * K * nin);
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < n; ++a) {
      const int m = action_slot_[a];
      const std::size_t act_base = (static_cast<std::size_t>(b) * n + a) * 2 * (K - 1);
      for (int i = 0; i < K; ++i) {
        double* row =
            v_node_in_.data() + ((static_cast<std::size_t>(b) * n + a) * K + i) * nin;
        if (i == m) {
          std::memcpy(row, zpm_.data() + (static_cast<std::size_t>(b) * n + a) * D,
                      D * sizeof(double));
          double* sum = row + D;
          std::memset(sum, 0, W * sizeof(double));
          for (int j = 0; j < K - 1; ++j) {
            const double* e = v_e1_.data() + (act_base + j) * W;
            for (int w = 0; w < W; ++w) sum[w] += e[w];
          }
        } else {
          std::memcpy(row, zp0.data.data() + (static_cast<std::size_t>(b) * K + i) * D,
                      D * sizeof(double));
          double* sum = row + D;
          const double* s0 = v_sum0_.data() + (static_cast<std::size_t>(b) * K + i) * W;
          // replace the edge into the addressed slot with its refreshed value
          const double* e_old =
              v_e0_.data() +
              (static_cast<std::size_t>(b) * K * (K - 1) + pair_row(K, i, m)) * W;
          const std::size_t incoming = act_base + (K - 1) + (i < m ? i : i - 1);
          const double* e_new = v_e1_.data() + incoming * W;
          for (int w = 0; w < W; ++w) sum[w] = s0[w] - e_old[w] + e_new[w];
        }
      }
    }
  v_emb_.resize(Bn * K * W);
  node.forward(v_node_in_.data(), Bn * K, v_emb_.data());

  v_pool_.resize(Bn * W);
  for (std::size_t g = 0; g < Bn; ++g) {
    double* dst = v_pool_.data() + g * W;
    std::memset(dst, 0, W * sizeof(double));
    for (int i = 0; i < K; ++i) {
      const double* e = v_emb_.data() + (g * K + i) * W;
      for (int w = 0; w < W; ++w) dst[w] += e[w];
    }
    for (int w = 0; w < W; ++w) dst[w] /= K;
  }
  head_out->resize(Bn);
  head.forward(v_pool_.data(), Bn, head_out->data());
}

const Tensor& FastDiscreteCritic::actor_logits(const Tensor& z, int B) {
  const int K = nets_.k, D = nets_.d, W = nets_.width;
  const int n = nets_.n_actions;
  const std::size_t BK = static_cast<std::size_t>(B) * K;
  const std::size_t ein = static_cast<std::size_t>(2 * D);
  const std::size_t edge_rows = BK * (K - 1);

  ac_edge_in_.resize(edge_rows * ein);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        if (i == j) continue;
        double* row = ac_edge_in_.data() +
                      (static_cast<std::size_t>(b) * K * (K - 1) + pair_row(K, i, j)) * ein;
        std::memcpy(row, z.data.data() + (static_cast<std::size_t>(b) * K + i) * D,
                    D * sizeof(double));
        std::memcpy(row + D, z.data.data() + (static_cast<std::size_t>(b) * K + j) * D,
                    D * sizeof(double));
      }
  ac_msg_.resize(edge_rows * W);
  ac_edge_.forward(ac_edge_in_.data(), edge_rows, ac_msg_.data());
  fill_zero(ac_sum_, BK * W);
  for (std::size_t g = 0; g < BK; ++g) {
    double* dst = ac_sum_.data() + g * W;
    const double* src = ac_msg_.data() + g * (K - 1) * W;
    for (int r = 0; r < K - 1; ++r)
      for (int w = 0; w < W; ++w) dst[w] += src[static_cast<std::size_t>(r) * W + w];
  }
  const std::size_t nin = static_cast<std::size_t>(D + W);
  ac_node_in_.resize(BK * nin);
  for (std::size_t r = 0; r < BK; ++r) {
    std::memcpy(ac_node_in_.data() + r * nin, z.data.data() + r * D, D * sizeof(double));
    std::memcpy(ac_node_in_.data() + r * nin + D, ac_sum_.data() + r * W, W * sizeof(double));
  }
  ac_emb_.resize(BK * W);
  ac_node_.forward(ac_node_in_.data(), BK, ac_emb_.data());
  ac_pool_.resize(static_cast<std::size_t>(B) * W);
  for (int b = 0; b < B; ++b) {
    double* dst = ac_pool_.data() + static_cast<std::size_t>(b) * W;
    std::memset(dst, 0, W * sizeof(double));
    for (int i = 0; i < K; ++i) {
      const double* e = ac_emb_.data() + (static_cast<std::size_t>(b) * K + i) * W;
      for (int w = 0; w < W; ++w) dst[w] += e[w];
    }
    for (int w = 0; w < W; ++w) dst[w] /= K;
  }
  logits_out_ = Tensor({static_cast<std::size_t>(B), static_cast<std::size_t>(n)});
  ac_head_.forward(ac_pool_.data(), static_cast<std::size_t>(B), logits_out_.data.data());
  return logits_out_;
}

}  // namespace slotrl
