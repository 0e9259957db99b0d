#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "slotrl/tensor.hpp"

namespace slotrl {

enum class Op : std::uint8_t {
  Input,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Minimum,
  Relu,
  Tanh,
  Exp,
  Log,
  Square,
  Scale,        // x * c
  AddScalar,    // x + c
  AddRowVec,    // (m,n) + (n,) broadcast over rows
  MulRowVec,    // (m,n) * (n,) broadcast over rows
  SumAxis,
  MeanAxis,
  SumAll,
  MeanAll,
  Softmax,      // last axis
  LogSoftmax,   // last axis
  LayerNorm,    // last axis, no affine
  ConcatCols,
  SliceCols,
  GatherRows,
  SegmentSumRows,
  Reshape,
  StopGrad,
  BroadcastScalar,
};

const char* op_name(Op op);

using NodeId = int;
using Bindings = std::unordered_map<std::string, const Tensor*>;
using GradMap = std::map<std::string, Tensor>;

// Reverse-mode expression graph. Nodes are appended in topological order;
// evaluate() runs the forward pass and caches every intermediate, gradient()
// walks the tape backwards. Single-threaded per graph; reuse across calls
// with fresh bindings is the intended steady state.
class Graph {
 public:
  struct Node {
    Op op;
    std::vector<NodeId> in;
    std::vector<std::size_t> shape;
    std::string name;               // Input only
    double c = 0.0;                 // Scale / AddScalar
    int axis = 0;                   // SumAxis / MeanAxis / ConcatCols
    std::size_t i0 = 0, len = 0;    // SliceCols
    std::size_t n_out = 0;          // SegmentSumRows
    std::vector<std::size_t> idx;   // GatherRows / SegmentSumRows
    Tensor value;
    Tensor grad;
    bool computed = false;
    bool needs_grad = false;
    bool grad_set = false;
  };

  NodeId input(const std::string& name, std::vector<std::size_t> shape);
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId minimum(NodeId a, NodeId b);
  NodeId relu(NodeId x);
  NodeId tanh_(NodeId x);
  NodeId exp_(NodeId x);
  NodeId log_(NodeId x);
  NodeId square(NodeId x);
  NodeId scale(NodeId x, double c);
  NodeId add_scalar(NodeId x, double c);
  NodeId add_rowvec(NodeId x, NodeId v);
  NodeId mul_rowvec(NodeId x, NodeId v);
  NodeId sum_axis(NodeId x, int axis);
  NodeId mean_axis(NodeId x, int axis);
  NodeId sum_all(NodeId x);
  NodeId mean_all(NodeId x);
  NodeId softmax(NodeId x);
  NodeId log_softmax(NodeId x);
  NodeId layer_norm(NodeId x);
  NodeId concat_cols(const std::vector<NodeId>& xs);
  NodeId slice_cols(NodeId x, std::size_t start, std::size_t len);
  NodeId gather_rows(NodeId x, std::vector<std::size_t> idx);
  NodeId segment_sum_rows(NodeId x, std::vector<std::size_t> segments, std::size_t n_out);
  NodeId reshape(NodeId x, std::vector<std::size_t> shape);
  NodeId stop_grad(NodeId x);
  NodeId broadcast_scalar(NodeId x, std::vector<std::size_t> shape);

  // clamp(x, lo, hi) composed from relu nodes; gradient passes inside the range.
  NodeId clamp(NodeId x, double lo, double hi);

  const Tensor& evaluate(NodeId out, const Bindings& bindings);
  // Gradients of a scalar output w.r.t. the named inputs. Inputs sharing a
  // name accumulate into one tensor. Requires evaluate() on this graph first.
  GradMap gradient(NodeId out, const std::vector<std::string>& wrt);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const std::vector<std::size_t>& shape_of(NodeId id) const { return nodes_[id].shape; }
  std::size_t node_count() const { return nodes_.size(); }

  static constexpr double kLayerNormEps = 1e-5;

 private:
  NodeId push(Node n);
  const Node& at(NodeId id) const { return nodes_[id]; }
  void forward_node(Node& n, const Bindings& bindings);
  void backward_node(Node& n);
  void accumulate(NodeId target, const Tensor& g);
  Tensor& grad_buffer(NodeId target);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::vector<NodeId>> inputs_by_name_;
};

}  // namespace slotrl
