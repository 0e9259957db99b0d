#include "slotrl/graph.hpp"

#include <algorithm>
#include <cmath>

namespace slotrl {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Minimum: return "minimum";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::AddRowVec: return "add_rowvec";
    case Op::MulRowVec: return "mul_rowvec";
    case Op::SumAxis: return "sum_axis";
    case Op::MeanAxis: return "mean_axis";
    case Op::SumAll: return "sum_all";
    case Op::MeanAll: return "mean_all";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::LayerNorm: return "layer_norm";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::GatherRows: return "gather_rows";
    case Op::SegmentSumRows: return "segment_sum_rows";
    case Op::Reshape: return "reshape";
    case Op::StopGrad: return "stop_grad";
    case Op::BroadcastScalar: return "broadcast_scalar";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(Op op, const std::vector<std::size_t>& a,
                              const std::vector<std::size_t>& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

// rows/cols of the last axis view: rank-1 is one row, rank-2 is per-row.
void last_axis_dims(const std::vector<std::size_t>& s, std::size_t* rows, std::size_t* cols) {
  if (s.size() == 1) {
    *rows = 1;
    *cols = s[0];
  } else {
    *rows = s[0];
    *cols = s[1];
  }
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(const std::string& name, std::vector<std::size_t> shape) {
  Node n;
  n.op = Op::Input;
  n.name = name;
  n.shape = std::move(shape);
  NodeId id = push(std::move(n));
  inputs_by_name_[name].push_back(id);
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.shape = value.shape;
  n.value = std::move(value);
  n.computed = true;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const auto& sa = at(a).shape;
  const auto& sb = at(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error(Op::MatMul, sa, sb);
  Node n;
  n.op = Op::MatMul;
  n.in = {a, b};
  n.shape = {sa[0], sb[1]};
  return push(std::move(n));
}

#define SLOTRL_BINARY_SAME_SHAPE(fn, OPK)                        \
  NodeId Graph::fn(NodeId a, NodeId b) {                         \
    if (at(a).shape != at(b).shape)                              \
      shape_error(Op::OPK, at(a).shape, at(b).shape);            \
    Node n;                                                      \
    n.op = Op::OPK;                                              \
    n.in = {a, b};                                               \
    n.shape = at(a).shape;                                       \
    return push(std::move(n));                                   \
  }

SLOTRL_BINARY_SAME_SHAPE(add, Add)
SLOTRL_BINARY_SAME_SHAPE(sub, Sub)
SLOTRL_BINARY_SAME_SHAPE(mul, Mul)
SLOTRL_BINARY_SAME_SHAPE(minimum, Minimum)
#undef SLOTRL_BINARY_SAME_SHAPE

#define SLOTRL_UNARY(fn, OPK)            \
  NodeId Graph::fn(NodeId x) {           \
    Node n;                              \
    n.op = Op::OPK;                      \
    n.in = {x};                          \
    n.shape = at(x).shape;               \
    return push(std::move(n));           \
  }

SLOTRL_UNARY(relu, Relu)
SLOTRL_UNARY(tanh_, Tanh)
SLOTRL_UNARY(exp_, Exp)
SLOTRL_UNARY(log_, Log)
SLOTRL_UNARY(square, Square)
SLOTRL_UNARY(stop_grad, StopGrad)
#undef SLOTRL_UNARY

NodeId Graph::scale(NodeId x, double c) {
  Node n;
  n.op = Op::Scale;
  n.in = {x};
  n.c = c;
  n.shape = at(x).shape;
  return push(std::move(n));
}

NodeId Graph::add_scalar(NodeId x, double c) {
  Node n;
  n.op = Op::AddScalar;
  n.in = {x};
  n.c = c;
  n.shape = at(x).shape;
  return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId x, NodeId v) {
  const auto& sx = at(x).shape;
  const auto& sv = at(v).shape;
  if (sx.size() != 2 || sv.size() != 1 || sv[0] != sx[1]) shape_error(Op::AddRowVec, sx, sv);
  Node n;
  n.op = Op::AddRowVec;
  n.in = {x, v};
  n.shape = sx;
  return push(std::move(n));
}

NodeId Graph::mul_rowvec(NodeId x, NodeId v) {
  const auto& sx = at(x).shape;
  const auto& sv = at(v).shape;
  if (sx.size() != 2 || sv.size() != 1 || sv[0] != sx[1]) shape_error(Op::MulRowVec, sx, sv);
  Node n;
  n.op = Op::MulRowVec;
  n.in = {x, v};
  n.shape = sx;
  return push(std::move(n));
}

NodeId Graph::sum_axis(NodeId x, int axis) {
  const auto& s = at(x).shape;
  if (s.size() != 2 || (axis != 0 && axis != 1))
    throw std::invalid_argument("sum_axis: need rank-2 input and axis 0/1, got " +
                                shape_str(s) + " axis " + std::to_string(axis));
  Node n;
  n.op = Op::SumAxis;
  n.in = {x};
  n.axis = axis;
  n.shape = {axis == 0 ? s[1] : s[0]};
  return push(std::move(n));
}

NodeId Graph::mean_axis(NodeId x, int axis) {
  NodeId id = sum_axis(x, axis);
  nodes_[id].op = Op::MeanAxis;
  return id;
}

NodeId Graph::sum_all(NodeId x) {
  Node n;
  n.op = Op::SumAll;
  n.in = {x};
  n.shape = {};
  return push(std::move(n));
}

NodeId Graph::mean_all(NodeId x) {
  Node n;
  n.op = Op::MeanAll;
  n.in = {x};
  n.shape = {};
  return push(std::move(n));
}

#define SLOTRL_LASTAXIS(fn, OPK)                                               \
  NodeId Graph::fn(NodeId x) {                                                 \
    const auto& s = at(x).shape;                                               \
    if (s.empty() || s.size() > 2)                                             \
      throw std::invalid_argument(std::string(op_name(Op::OPK)) +              \
                                  ": need rank 1 or 2, got " + shape_str(s));  \
    Node n;                                                                    \
    n.op = Op::OPK;                                                            \
    n.in = {x};                                                                \
    n.shape = s;                                                               \
    return push(std::move(n));                                                 \
  }

SLOTRL_LASTAXIS(softmax, Softmax)
SLOTRL_LASTAXIS(log_softmax, LogSoftmax)
SLOTRL_LASTAXIS(layer_norm, LayerNorm)
#undef SLOTRL_LASTAXIS

NodeId Graph::concat_cols(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: no inputs");
  std::size_t rows = 0, cols = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& s = at(xs[i]).shape;
    if (s.size() != 2) shape_error(Op::ConcatCols, at(xs[0]).shape, s);
    if (i == 0) {
      rows = s[0];
    } else if (s[0] != rows) {
      shape_error(Op::ConcatCols, at(xs[0]).shape, s);
    }
    cols += s[1];
  }
  Node n;
  n.op = Op::ConcatCols;
  n.in = xs;
  n.shape = {rows, cols};
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId x, std::size_t start, std::size_t len) {
  const auto& s = at(x).shape;
  if (s.size() != 2 || len == 0 || start + len > s[1])
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of " + shape_str(s));
  Node n;
  n.op = Op::SliceCols;
  n.in = {x};
  n.i0 = start;
  n.len = len;
  n.shape = {s[0], len};
  return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId x, std::vector<std::size_t> idx) {
  const auto& s = at(x).shape;
  if (s.size() != 2) throw std::invalid_argument("gather_rows: need rank-2, got " + shape_str(s));
  for (auto r : idx)
    if (r >= s[0])
      throw std::invalid_argument("gather_rows: index " + std::to_string(r) + " out of " +
                                  shape_str(s));
  Node n;
  n.op = Op::GatherRows;
  n.in = {x};
  n.shape = {idx.size(), s[1]};
  n.idx = std::move(idx);
  return push(std::move(n));
}

NodeId Graph::segment_sum_rows(NodeId x, std::vector<std::size_t> segments, std::size_t n_out) {
  const auto& s = at(x).shape;
  if (s.size() != 2 || segments.size() != s[0])
    throw std::invalid_argument("segment_sum_rows: " + std::to_string(segments.size()) +
                                " segment ids for " + shape_str(s));
  for (auto g : segments)
    if (g >= n_out)
      throw std::invalid_argument("segment_sum_rows: segment " + std::to_string(g) +
                                  " >= " + std::to_string(n_out));
  Node n;
  n.op = Op::SegmentSumRows;
  n.in = {x};
  n.n_out = n_out;
  n.shape = {n_out, s[1]};
  n.idx = std::move(segments);
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != shape_numel(at(x).shape))
    shape_error(Op::Reshape, at(x).shape, shape);
  Node n;
  n.op = Op::Reshape;
  n.in = {x};
  n.shape = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::broadcast_scalar(NodeId x, std::vector<std::size_t> shape) {
  if (at(x).shape.size() > 1 || shape_numel(at(x).shape) != 1)
    throw std::invalid_argument("broadcast_scalar: source has shape " +
                                shape_str(at(x).shape) + ", expected a scalar");
  Node n;
  n.op = Op::BroadcastScalar;
  n.in = {x};
  n.shape = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
  NodeId lo_clipped = add_scalar(relu(add_scalar(x, -lo)), lo);        // max(x, lo)
  return add_scalar(scale(relu(add_scalar(scale(lo_clipped, -1.0), hi)), -1.0), hi);  // min(., hi)
}

void Graph::forward_node(Node& n, const Bindings& bindings) {
  switch (n.op) {
    case Op::Input: {
      auto it = bindings.find(n.name);
      if (it == bindings.end() || it->second == nullptr)
        throw std::invalid_argument("evaluate: unbound input '" + n.name + "'");
      if (it->second->shape != n.shape)
        throw std::invalid_argument("evaluate: input '" + n.name + "' bound with shape " +
                                    shape_str(it->second->shape) + ", declared " +
                                    shape_str(n.shape));
      n.value = *it->second;
      return;
    }
    case Op::Constant:
      return;
    default:
      break;
  }

  if (n.value.shape != n.shape || n.value.size() != shape_numel(n.shape))
    n.value = Tensor(n.shape);
  double* out = n.value.data.data();
  const std::size_t out_n = n.value.size();

  auto X = [&](int i) -> const Tensor& { return nodes_[n.in[i]].value; };

  switch (n.op) {
    case Op::MatMul: {
      const Tensor& a = X(0);
      const Tensor& b = X(1);
      std::fill(n.value.data.begin(), n.value.data.end(), 0.0);
      gemm_nn(a.shape[0], a.shape[1], b.shape[1], a.data.data(), b.data.data(), out);
      break;
    }
    case Op::Add: {
      const double* a = X(0).data.data();
      const double* b = X(1).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = a[i] + b[i];
      break;
    }
    case Op::Sub: {
      const double* a = X(0).data.data();
      const double* b = X(1).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = a[i] - b[i];
      break;
    }
    case Op::Mul: {
      const double* a = X(0).data.data();
      const double* b = X(1).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = a[i] * b[i];
      break;
    }
    case Op::Minimum: {
      const double* a = X(0).data.data();
      const double* b = X(1).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = a[i] <= b[i] ? a[i] : b[i];
      break;
    }
    case Op::Relu: {
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    }
    case Op::Tanh: {
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = std::tanh(x[i]);
      break;
    }
    case Op::Exp: {
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = std::exp(x[i]);
      break;
    }
    case Op::Log: {
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = std::log(x[i]);
      break;
    }
    case Op::Square: {
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = x[i] * x[i];
      break;
    }
    case Op::Scale: {
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = x[i] * n.c;
      break;
    }
    case Op::AddScalar: {
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < out_n; ++i) out[i] = x[i] + n.c;
      break;
    }
    case Op::AddRowVec: {
      const Tensor& x = X(0);
      const double* v = X(1).data.data();
      const std::size_t rows = x.shape[0], cols = x.shape[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        double* o = out + r * cols;
        for (std::size_t j = 0; j < cols; ++j) o[j] = xr[j] + v[j];
      }
      break;
    }
    case Op::MulRowVec: {
      const Tensor& x = X(0);
      const double* v = X(1).data.data();
      const std::size_t rows = x.shape[0], cols = x.shape[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        double* o = out + r * cols;
        for (std::size_t j = 0; j < cols; ++j) o[j] = xr[j] * v[j];
      }
      break;
    }
    case Op::SumAxis:
    case Op::MeanAxis: {
      const Tensor& x = X(0);
      const std::size_t rows = x.shape[0], cols = x.shape[1];
      std::fill(n.value.data.begin(), n.value.data.end(), 0.0);
      if (n.axis == 0) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = x.data.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) out[j] += xr[j];
        }
        if (n.op == Op::MeanAxis)
          for (std::size_t j = 0; j < cols; ++j) out[j] /= static_cast<double>(rows);
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = x.data.data() + r * cols;
          double acc = 0.0;
          for (std::size_t j = 0; j < cols; ++j) acc += xr[j];
          out[r] = n.op == Op::MeanAxis ? acc / static_cast<double>(cols) : acc;
        }
      }
      break;
    }
    case Op::SumAll:
    case Op::MeanAll: {
      const Tensor& x = X(0);
      double acc = 0.0;
      for (double v : x.data) acc += v;
      out[0] = n.op == Op::MeanAll ? acc / static_cast<double>(x.size()) : acc;
      break;
    }
    case Op::Softmax:
    case Op::LogSoftmax: {
      const Tensor& x = X(0);
      std::size_t rows, cols;
      last_axis_dims(x.shape, &rows, &cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        double* o = out + r * cols;
        double mx = xr[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) z += std::exp(xr[j] - mx);
        if (n.op == Op::Softmax) {
          for (std::size_t j = 0; j < cols; ++j) o[j] = std::exp(xr[j] - mx) / z;
        } else {
          const double lz = std::log(z);
          for (std::size_t j = 0; j < cols; ++j) o[j] = xr[j] - mx - lz;
        }
      }
      break;
    }
    case Op::LayerNorm: {
      const Tensor& x = X(0);
      std::size_t rows, cols;
      last_axis_dims(x.shape, &rows, &cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        double* o = out + r * cols;
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t j = 0; j < cols; ++j) o[j] = (xr[j] - mean) * inv;
      }
      break;
    }
    case Op::ConcatCols: {
      const std::size_t rows = n.shape[0], cols = n.shape[1];
      std::size_t off = 0;
      for (NodeId id : n.in) {
        const Tensor& x = nodes_[id].value;
        const std::size_t xc = x.shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = x.data.data() + r * xc;
          double* o = out + r * cols + off;
          for (std::size_t j = 0; j < xc; ++j) o[j] = xr[j];
        }
        off += xc;
      }
      break;
    }
    case Op::SliceCols: {
      const Tensor& x = X(0);
      const std::size_t rows = x.shape[0], xc = x.shape[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * xc + n.i0;
        double* o = out + r * n.len;
        for (std::size_t j = 0; j < n.len; ++j) o[j] = xr[j];
      }
      break;
    }
    case Op::GatherRows: {
      const Tensor& x = X(0);
      const std::size_t cols = x.shape[1];
      for (std::size_t r = 0; r < n.idx.size(); ++r) {
        const double* xr = x.data.data() + n.idx[r] * cols;
        double* o = out + r * cols;
        for (std::size_t j = 0; j < cols; ++j) o[j] = xr[j];
      }
      break;
    }
    case Op::SegmentSumRows: {
      const Tensor& x = X(0);
      const std::size_t rows = x.shape[0], cols = x.shape[1];
      std::fill(n.value.data.begin(), n.value.data.end(), 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        double* o = out + n.idx[r] * cols;
        for (std::size_t j = 0; j < cols; ++j) o[j] += xr[j];
      }
      break;
    }
    case Op::Reshape:
    case Op::StopGrad: {
      const Tensor& x = X(0);
      for (std::size_t i = 0; i < out_n; ++i) out[i] = x.data[i];
      break;
    }
    case Op::BroadcastScalar: {
      const double v = X(0).data[0];
      for (std::size_t i = 0; i < out_n; ++i) out[i] = v;
      break;
    }
    case Op::Input:
    case Op::Constant:
      break;
  }
}

const Tensor& Graph::evaluate(NodeId out, const Bindings& bindings) {
  if (out < 0 || out >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("evaluate: bad node id");
  for (NodeId id = 0; id <= out; ++id) {
    Node& n = nodes_[id];
    if (n.op == Op::Constant) continue;
    forward_node(n, bindings);
    n.computed = true;
  }
  return nodes_[out].value;
}

Tensor& Graph::grad_buffer(NodeId target) {
  Node& t = nodes_[target];
  if (!t.grad_set) {
    if (t.grad.shape != t.value.shape || t.grad.size() != t.value.size())
      t.grad = Tensor(t.value.shape);
    else
      std::fill(t.grad.data.begin(), t.grad.data.end(), 0.0);
    t.grad_set = true;
  }
  return t.grad;
}

void Graph::accumulate(NodeId target, const Tensor& g) {
  Tensor& dst = grad_buffer(target);
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

void Graph::backward_node(Node& n) {
  const Tensor& g = n.grad;
  auto needs = [&](int i) { return nodes_[n.in[i]].needs_grad; };
  auto X = [&](int i) -> const Tensor& { return nodes_[n.in[i]].value; };

  switch (n.op) {
    case Op::Input:
    case Op::Constant:
    case Op::StopGrad:
      break;
    case Op::MatMul: {
      const Tensor& a = X(0);
      const Tensor& b = X(1);
      const std::size_t m = a.shape[0], k = a.shape[1], nn = b.shape[1];
      if (needs(0))
        gemm_nt(m, nn, k, g.data.data(), b.data.data(), grad_buffer(n.in[0]).data.data());
      if (needs(1))
        gemm_tn(k, m, nn, a.data.data(), g.data.data(), grad_buffer(n.in[1]).data.data());
      break;
    }
    case Op::Add: {
      if (needs(0)) accumulate(n.in[0], g);
      if (needs(1)) accumulate(n.in[1], g);
      break;
    }
    case Op::Sub: {
      if (needs(0)) accumulate(n.in[0], g);
      if (needs(1)) {
        Tensor& d = grad_buffer(n.in[1]);
        for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] -= g.data[i];
      }
      break;
    }
    case Op::Mul: {
      if (needs(0)) {
        Tensor& d = grad_buffer(n.in[0]);
        const double* b = X(1).data.data();
        for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] * b[i];
      }
      if (needs(1)) {
        Tensor& d = grad_buffer(n.in[1]);
        const double* a = X(0).data.data();
        for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] * a[i];
      }
      break;
    }
    case Op::Minimum: {
      const double* a = X(0).data.data();
      const double* b = X(1).data.data();
      if (needs(0)) {
        Tensor& d = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < d.data.size(); ++i)
          if (a[i] <= b[i]) d.data[i] += g.data[i];
      }
      if (needs(1)) {
        Tensor& d = grad_buffer(n.in[1]);
        for (std::size_t i = 0; i < d.data.size(); ++i)
          if (a[i] > b[i]) d.data[i] += g.data[i];
      }
      break;
    }
    case Op::Relu: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < d.data.size(); ++i)
        if (x[i] > 0.0) d.data[i] += g.data[i];
      break;
    }
    case Op::Tanh: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const double* y = n.value.data.data();
      for (std::size_t i = 0; i < d.data.size(); ++i)
        d.data[i] += g.data[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Exp: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const double* y = n.value.data.data();
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] * y[i];
      break;
    }
    case Op::Log: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] / x[i];
      break;
    }
    case Op::Square: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const double* x = X(0).data.data();
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] * 2.0 * x[i];
      break;
    }
    case Op::Scale: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] * n.c;
      break;
    }
    case Op::AddScalar:
    case Op::Reshape: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i];
      break;
    }
    case Op::AddRowVec: {
      const std::size_t rows = n.shape[0], cols = n.shape[1];
      if (needs(0)) accumulate(n.in[0], g);
      if (needs(1)) {
        Tensor& d = grad_buffer(n.in[1]);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) d.data[j] += gr[j];
        }
      }
      break;
    }
    case Op::MulRowVec: {
      const std::size_t rows = n.shape[0], cols = n.shape[1];
      const Tensor& x = X(0);
      const double* v = X(1).data.data();
      if (needs(0)) {
        Tensor& d = grad_buffer(n.in[0]);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data.data() + r * cols;
          double* dr = d.data.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) dr[j] += gr[j] * v[j];
        }
      }
      if (needs(1)) {
        Tensor& d = grad_buffer(n.in[1]);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data.data() + r * cols;
          const double* xr = x.data.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) d.data[j] += gr[j] * xr[j];
        }
      }
      break;
    }
    case Op::SumAxis:
    case Op::MeanAxis: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const std::size_t rows = d.shape[0], cols = d.shape[1];
      const double denom = n.op == Op::MeanAxis
                               ? static_cast<double>(n.axis == 0 ? rows : cols)
                               : 1.0;
      for (std::size_t r = 0; r < rows; ++r) {
        double* dr = d.data.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j)
          dr[j] += g.data[n.axis == 0 ? j : r] / denom;
      }
      break;
    }
    case Op::SumAll:
    case Op::MeanAll: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const double gv =
          n.op == Op::MeanAll ? g.data[0] / static_cast<double>(d.size()) : g.data[0];
      for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += gv;
      break;
    }
    case Op::Softmax: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      std::size_t rows, cols;
      last_axis_dims(n.shape, &rows, &cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = n.value.data.data() + r * cols;
        const double* gr = g.data.data() + r * cols;
        double* dr = d.data.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * y[j];
        for (std::size_t j = 0; j < cols; ++j) dr[j] += y[j] * (gr[j] - dot);
      }
      break;
    }
    case Op::LogSoftmax: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      std::size_t rows, cols;
      last_axis_dims(n.shape, &rows, &cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = n.value.data.data() + r * cols;
        const double* gr = g.data.data() + r * cols;
        double* dr = d.data.data() + r * cols;
        double gsum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gsum += gr[j];
        for (std::size_t j = 0; j < cols; ++j) dr[j] += gr[j] - std::exp(y[j]) * gsum;
      }
      break;
    }
    case Op::LayerNorm: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const Tensor& x = X(0);
      std::size_t rows, cols;
      last_axis_dims(n.shape, &rows, &cols);
      const double cn = static_cast<double>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        const double* y = n.value.data.data() + r * cols;
        const double* gr = g.data.data() + r * cols;
        double* dr = d.data.data() + r * cols;
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
        mean /= cn;
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= cn;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        double gmean = 0.0, gymean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          gmean += gr[j];
          gymean += gr[j] * y[j];
        }
        gmean /= cn;
        gymean /= cn;
        for (std::size_t j = 0; j < cols; ++j)
          dr[j] += inv * (gr[j] - gmean - y[j] * gymean);
      }
      break;
    }
    case Op::ConcatCols: {
      const std::size_t rows = n.shape[0], cols = n.shape[1];
      std::size_t off = 0;
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        const std::size_t xc = nodes_[n.in[i]].shape[1];
        if (nodes_[n.in[i]].needs_grad) {
          Tensor& d = grad_buffer(n.in[i]);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data.data() + r * cols + off;
            double* dr = d.data.data() + r * xc;
            for (std::size_t j = 0; j < xc; ++j) dr[j] += gr[j];
          }
        }
        off += xc;
      }
      break;
    }
    case Op::SliceCols: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const std::size_t rows = n.shape[0], xc = d.shape[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data.data() + r * n.len;
        double* dr = d.data.data() + r * xc + n.i0;
        for (std::size_t j = 0; j < n.len; ++j) dr[j] += gr[j];
      }
      break;
    }
    case Op::GatherRows: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const std::size_t cols = d.shape[1];
      for (std::size_t r = 0; r < n.idx.size(); ++r) {
        const double* gr = g.data.data() + r * cols;
        double* dr = d.data.data() + n.idx[r] * cols;
        for (std::size_t j = 0; j < cols; ++j) dr[j] += gr[j];
      }
      break;
    }
    case Op::SegmentSumRows: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      const std::size_t cols = d.shape[1];
      for (std::size_t r = 0; r < n.idx.size(); ++r) {
        const double* gr = g.data.data() + n.idx[r] * cols;
        double* dr = d.data.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) dr[j] += gr[j];
      }
      break;
    }
    case Op::BroadcastScalar: {
      if (!needs(0)) break;
      Tensor& d = grad_buffer(n.in[0]);
      double acc = 0.0;
      for (double v : g.data) acc += v;
      d.data[0] += acc;
      break;
    }
  }
}

GradMap Graph::gradient(NodeId out, const std::vector<std::string>& wrt) {
  if (out < 0 || out >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("gradient: bad node id");
  if (!nodes_[out].computed)
    throw std::invalid_argument("gradient: evaluate must run before gradient");
  if (nodes_[out].value.size() != 1)
    throw std::invalid_argument("gradient: output has shape " +
                                shape_str(nodes_[out].value.shape) + ", expected a scalar");
  for (const auto& name : wrt)
    if (inputs_by_name_.find(name) == inputs_by_name_.end())
      throw std::invalid_argument("gradient: unknown parameter '" + name + "'");

  // Mark the nodes reachable from the requested inputs.
  for (Node& n : nodes_) {
    n.needs_grad = false;
    n.grad_set = false;
  }
  for (const auto& name : wrt)
    for (NodeId id : inputs_by_name_.at(name)) nodes_[id].needs_grad = true;
  for (Node& n : nodes_) {
    if (n.op == Op::Input || n.op == Op::Constant || n.op == Op::StopGrad) continue;
    for (NodeId in : n.in)
      if (nodes_[in].needs_grad) {
        n.needs_grad = true;
        break;
      }
  }

  if (nodes_[out].needs_grad) {
    grad_buffer(out).data[0] = 1.0;
    for (NodeId id = out; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.needs_grad && n.grad_set) backward_node(n);
    }
  }

  GradMap result;
  for (const auto& name : wrt) {
    Tensor acc;
    for (NodeId id : inputs_by_name_.at(name)) {
      const Node& n = nodes_[id];
      if (acc.shape.empty() && acc.data.empty()) acc = Tensor(n.shape);
      if (n.grad_set)
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += n.grad.data[i];
    }
    result.emplace(name, std::move(acc));
  }
  return result;
}

}  // namespace slotrl
