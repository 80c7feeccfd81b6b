#pragma once

// Reverse-mode autodiff over a retained computation graph.
//
// The graph is built define-by-run: every builder call appends one node,
// evaluates it immediately, and caches the output tensor. Because nodes are
// appended in dependency order, the node vector is already a topological
// order; backward() walks it in reverse, and the relevance walker in lrp.hpp
// re-walks the same cached nodes. Caches are retained until the graph is
// destroyed.
//
// Parameter nodes do not copy the tensor: they read through the shared
// ParameterStore, so a graph built once can be re-evaluated after the store
// changes (this is what grad_check's finite differences rely on).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqlab/tensor.hpp"

namespace seqlab {

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using NodeId = int;

enum class Op {
  Input,
  Const,
  Param,
  MatMul,
  Add,
  Mul,
  Tanh,
  Sigmoid,
  Softmax,
  LogSoftmax,
  Embed,
  Concat,
  Slice,
  Sum,
  Scale,
  Transpose,
  Gather,
  LayerNorm,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Const: return "const";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Mul: return "multiply";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log-softmax";
    case Op::Embed: return "embedding-lookup";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Sum: return "sum";
    case Op::Scale: return "scale";
    case Op::Transpose: return "transpose";
    case Op::Gather: return "gather";
    case Op::LayerNorm: return "layernorm";
  }
  return "?";
}

struct Node {
  Op op{};
  std::vector<NodeId> inputs;
  std::string name;        // Input / Param binding name
  Tensor value;            // cached output (unused for Param: registry-backed)
  Tensor grad;             // accumulated by backward(); empty means zero
  std::vector<int> ints;   // Embed / Gather indices
  int axis = 0;            // Concat / Slice axis
  int lo = 0, hi = 0;      // Slice range
  double factor = 1.0;     // Scale
  bool causal = false;     // Softmax over a square matrix with causal mask
  bool squeeze = false;    // Slice: drop the leading unit dim (row extraction)
  bool lrp_weight = false; // LRP: treat output as constant weights
  int gate_input = -1;     // LRP: Mul operand index acting as a gate
};

constexpr double kLayerNormEps = 1e-5;

class Graph {
 public:
  explicit Graph(ParameterStore* params = nullptr) : params_(params) {}

  // ---- leaves ----

  NodeId input(const std::string& name, Tensor v) {
    Node n;
    n.op = Op::Input;
    n.name = name;
    n.value = std::move(v);
    return push(std::move(n));
  }

  NodeId constant(Tensor v) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(v);
    return push(std::move(n));
  }

  NodeId param(const std::string& name) {
    if (!params_) throw GraphError("graph has no parameter store");
    if (!params_->contains(name)) throw GraphError("unknown parameter: " + name);
    Node n;
    n.op = Op::Param;
    n.name = name;
    return push(std::move(n));
  }

  // ---- ops ----

  NodeId matmul(NodeId a, NodeId b) { return op2(Op::MatMul, a, b); }
  NodeId add(NodeId a, NodeId b) { return op2(Op::Add, a, b); }
  NodeId mul(NodeId a, NodeId b) { return op2(Op::Mul, a, b); }

  // Elementwise product where `gate` modulates `signal`; LRP routes all
  // relevance through the signal operand.
  NodeId mul_gated(NodeId signal, NodeId gate) {
    NodeId id = op2(Op::Mul, signal, gate);
    nodes_[id].gate_input = 1;
    return id;
  }

  NodeId tanh(NodeId a) { return op1(Op::Tanh, a); }
  NodeId sigmoid(NodeId a) { return op1(Op::Sigmoid, a); }
  NodeId softmax(NodeId a) { return op1(Op::Softmax, a); }
  NodeId log_softmax(NodeId a) { return op1(Op::LogSoftmax, a); }

  // Row-wise softmax over a square [T,T] matrix where row i only sees
  // columns 0..i.
  NodeId softmax_causal(NodeId a) {
    Node n;
    n.op = Op::Softmax;
    n.inputs = {a};
    n.causal = true;
    return push(std::move(n));
  }

  NodeId embed(NodeId table, std::vector<int> ids) {
    Node n;
    n.op = Op::Embed;
    n.inputs = {table};
    n.ints = std::move(ids);
    return push(std::move(n));
  }

  NodeId concat(NodeId a, NodeId b, int axis = 0) {
    Node n;
    n.op = Op::Concat;
    n.inputs = {a, b};
    n.axis = axis;
    return push(std::move(n));
  }

  // Slice along `axis`; on rank-1 tensors axis must be 0.
  NodeId slice(NodeId a, int lo, int hi, int axis = 0) {
    Node n;
    n.op = Op::Slice;
    n.inputs = {a};
    n.lo = lo;
    n.hi = hi;
    n.axis = axis;
    return push(std::move(n));
  }

  // Row r of a rank-2 tensor as a rank-1 vector.
  NodeId row(NodeId a, int r) {
    Node n;
    n.op = Op::Slice;
    n.inputs = {a};
    n.lo = r;
    n.hi = r + 1;
    n.axis = 0;
    n.squeeze = true;
    return push(std::move(n));
  }

  NodeId sum(NodeId a) { return op1(Op::Sum, a); }

  NodeId scale(NodeId a, double f) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.factor = f;
    return push(std::move(n));
  }

  NodeId transpose(NodeId a) { return op1(Op::Transpose, a); }

  NodeId gather(NodeId a, std::vector<int> flat_idx) {
    Node n;
    n.op = Op::Gather;
    n.inputs = {a};
    n.ints = std::move(flat_idx);
    return push(std::move(n));
  }

  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias) {
    Node n;
    n.op = Op::LayerNorm;
    n.inputs = {x, gain, bias};
    return push(std::move(n));
  }

  // Mark a node as constant weights for relevance propagation (attention
  // probabilities etc.).
  void mark_lrp_weight(NodeId id) { nodes_[id].lrp_weight = true; }

  void mark_output(const std::string& name, NodeId id) {
    outputs_.emplace_back(name, id);
  }

  // ---- access ----

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

  const Tensor& value(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::Param) return params_->at(n.name);
    return n.value;
  }

  const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  ParameterStore* params() const { return params_; }

  // ---- evaluation ----

  // Rebind the named inputs, recompute every node, return the marked outputs.
  NamedTensorMap forward_eval(const NamedTensorMap& inputs) {
    for (auto& n : nodes_) {
      if (n.op != Op::Input) continue;
      if (!inputs.contains(n.name)) continue;
      const Tensor& t = inputs.at(n.name);
      if (!t.same_shape(n.value))
        throw GraphError("input '" + n.name + "' shape " + shape_str(t) +
                         " does not match bound shape " + shape_str(n.value));
      n.value = t;
    }
    for (const auto& n : nodes_) {
      if (n.op == Op::Input && !inputs.contains(n.name) && n.value.numel() == 0)
        throw GraphError("input '" + n.name + "' not bound");
    }
    recompute();
    NamedTensorMap out;
    for (const auto& [name, id] : outputs_) out.emplace(name, value(id));
    return out;
  }

  // Recompute all non-leaf nodes in topological order (leaf values are kept).
  void recompute() {
    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.op == Op::Input || n.op == Op::Const || n.op == Op::Param) continue;
      n.value = compute(n, id);
    }
  }

  // ---- backward ----

  GradientMap backward(NodeId seed) {
    if (seed < 0 || seed >= static_cast<NodeId>(nodes_.size()))
      throw GraphError("backward: seed node out of range");
    if (value(seed).numel() != 1)
      throw GraphError("backward: seed node " + std::to_string(seed) + " (" +
                       op_name(node(seed).op) + ") is not scalar");
    for (auto& n : nodes_) n.grad = Tensor();
    nodes_[static_cast<std::size_t>(seed)].grad = Tensor::scalar(1.0);

    for (NodeId id = seed; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.numel() == 0) continue;
      propagate(n, id);
    }

    GradientMap gm;
    if (params_) {
      for (const auto& [name, t] : params_->entries())
        gm.emplace(name, Tensor::zeros(t.shape));
      for (const auto& n : nodes_) {
        if (n.op != Op::Param || n.grad.numel() == 0) continue;
        Tensor& g = gm.at(n.name);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
      }
    }
    return gm;
  }

  // Max over all parameter elements of the central-difference relative error
  //   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
  double grad_check(NodeId seed, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2))
      throw GraphError("grad_check: eps must be in (0, 1e-2]");
    GradientMap analytic = backward(seed);
    double worst = 0.0;
    for (auto& [name, p] : params_->entries()) {
      const Tensor& ga = analytic.at(name);
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double saved = p.data[i];
        p.data[i] = saved + eps;
        recompute();
        const double fp = value(seed).data[0];
        p.data[i] = saved - eps;
        recompute();
        const double fm = value(seed).data[0];
        p.data[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw GraphError("grad_check: non-finite value during finite differences");
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = ga.data[i];
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(a - numeric) / denom);
      }
    }
    recompute();
    return worst;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, NodeId>> outputs_;
  ParameterStore* params_;

  NodeId op1(Op op, NodeId a) {
    Node n;
    n.op = op;
    n.inputs = {a};
    return push(std::move(n));
  }
  NodeId op2(Op op, NodeId a, NodeId b) {
    Node n;
    n.op = op;
    n.inputs = {a, b};
    return push(std::move(n));
  }

  NodeId push(Node n) {
    NodeId id = static_cast<NodeId>(nodes_.size());
    for (NodeId in : n.inputs)
      if (in < 0 || in >= id)
        throw GraphError("node " + std::to_string(id) + ": bad input id");
    nodes_.push_back(std::move(n));
    Node& nn = nodes_.back();
    if (nn.op != Op::Input && nn.op != Op::Const && nn.op != Op::Param)
      nn.value = compute(nn, id);
    return id;
  }

  [[noreturn]] void fail(const Node& n, NodeId id, const std::string& what) const {
    throw GraphError("node " + std::to_string(id) + " (" + op_name(n.op) + "): " + what);
  }

  const Tensor& in(const Node& n, int i) const { return value(n.inputs[static_cast<std::size_t>(i)]); }

  Tensor compute(const Node& n, NodeId id) const {
    Tensor out = eval(n, id);
    if (!out.all_finite()) fail(n, id, "non-finite output");
    return out;
  }

  Tensor eval(const Node& n, NodeId id) const {
    switch (n.op) {
      case Op::Input:
      case Op::Const:
      case Op::Param:
        return n.value;

      case Op::MatMul: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        const int ar = a.rank(), br = b.rank();
        if (ar == 2 && br == 2) {
          if (a.shape[1] != b.shape[0])
            fail(n, id, "matmul " + shape_str(a) + " x " + shape_str(b));
          Tensor c = Tensor::zeros({a.shape[0], b.shape[1]});
          mm(a.data.data(), a.shape[0], a.shape[1], b.data.data(), b.shape[1],
             c.data.data());
          return c;
        }
        if (ar == 1 && br == 2) {
          if (a.shape[0] != b.shape[0])
            fail(n, id, "matmul " + shape_str(a) + " x " + shape_str(b));
          Tensor c = Tensor::zeros({b.shape[1]});
          mm(a.data.data(), 1, a.shape[0], b.data.data(), b.shape[1], c.data.data());
          return c;
        }
        if (ar == 2 && br == 1) {
          if (a.shape[1] != b.shape[0])
            fail(n, id, "matmul " + shape_str(a) + " x " + shape_str(b));
          Tensor c = Tensor::zeros({a.shape[0]});
          for (int i = 0; i < a.shape[0]; ++i) {
            double acc = 0.0;
            for (int k = 0; k < a.shape[1]; ++k) acc += a.at(i, k) * b.at(k);
            c.at(i) = acc;
          }
          return c;
        }
        fail(n, id, "matmul needs rank-2 on at least one side");
      }

      case Op::Add: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        if (a.same_shape(b)) {
          Tensor c = a;
          for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
          return c;
        }
        if (a.rank() == 2 && b.rank() == 1 && a.shape[1] == b.shape[0]) {
          Tensor c = a;
          for (int r = 0; r < a.shape[0]; ++r)
            for (int j = 0; j < a.shape[1]; ++j) c.at(r, j) += b.at(j);
          return c;
        }
        fail(n, id, "add shapes " + shape_str(a) + " vs " + shape_str(b));
      }

      case Op::Mul: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        if (!a.same_shape(b))
          fail(n, id, "multiply shapes " + shape_str(a) + " vs " + shape_str(b));
        Tensor c = a;
        for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
        return c;
      }

      case Op::Tanh: {
        Tensor c = in(n, 0);
        for (double& v : c.data) v = std::tanh(v);
        return c;
      }

      case Op::Sigmoid: {
        Tensor c = in(n, 0);
        for (double& v : c.data) v = 1.0 / (1.0 + std::exp(-v));
        return c;
      }

      case Op::Softmax:
      case Op::LogSoftmax: {
        const Tensor& a = in(n, 0);
        if (n.causal && (a.rank() != 2 || a.shape[0] != a.shape[1]))
          fail(n, id, "causal softmax needs a square matrix");
        Tensor c = a;
        const int rows = a.rank() == 2 ? a.shape[0] : 1;
        const int cols = a.rank() == 2 ? a.shape[1] : a.shape[0];
        for (int r = 0; r < rows; ++r) {
          double* p = c.data.data() + static_cast<std::size_t>(r) * cols;
          const int m = n.causal ? r + 1 : cols;
          double mx = p[0];
          for (int j = 1; j < m; ++j) mx = std::max(mx, p[j]);
          double z = 0.0;
          for (int j = 0; j < m; ++j) z += std::exp(p[j] - mx);
          if (n.op == Op::Softmax) {
            for (int j = 0; j < m; ++j) p[j] = std::exp(p[j] - mx) / z;
            for (int j = m; j < cols; ++j) p[j] = 0.0;
          } else {
            const double lz = std::log(z) + mx;
            for (int j = 0; j < m; ++j) p[j] -= lz;
            for (int j = m; j < cols; ++j) p[j] = 0.0;  // masked positions unused
          }
        }
        return c;
      }

      case Op::Embed: {
        const Tensor& t = in(n, 0);
        if (t.rank() != 2) fail(n, id, "embedding table must be rank 2");
        const int V = t.shape[0], E = t.shape[1];
        Tensor c = Tensor::zeros({static_cast<int>(n.ints.size()), E});
        for (std::size_t r = 0; r < n.ints.size(); ++r) {
          const int tok = n.ints[r];
          if (tok < 0 || tok >= V)
            fail(n, id, "token id " + std::to_string(tok) + " out of vocabulary (size " +
                            std::to_string(V) + ")");
          for (int j = 0; j < E; ++j)
            c.at(static_cast<int>(r), j) = t.at(tok, j);
        }
        return c;
      }

      case Op::Concat: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        if (a.rank() == 1 && b.rank() == 1 && n.axis == 0) {
          Tensor c = Tensor::zeros({a.shape[0] + b.shape[0]});
          std::copy(a.data.begin(), a.data.end(), c.data.begin());
          std::copy(b.data.begin(), b.data.end(), c.data.begin() + a.shape[0]);
          return c;
        }
        if (a.rank() == 2 && b.rank() == 2) {
          if (n.axis == 0) {
            if (a.shape[1] != b.shape[1]) fail(n, id, "concat cols differ");
            Tensor c = Tensor::zeros({a.shape[0] + b.shape[0], a.shape[1]});
            std::copy(a.data.begin(), a.data.end(), c.data.begin());
            std::copy(b.data.begin(), b.data.end(), c.data.begin() + a.numel());
            return c;
          }
          if (a.shape[0] != b.shape[0]) fail(n, id, "concat rows differ");
          Tensor c = Tensor::zeros({a.shape[0], a.shape[1] + b.shape[1]});
          for (int r = 0; r < a.shape[0]; ++r) {
            for (int j = 0; j < a.shape[1]; ++j) c.at(r, j) = a.at(r, j);
            for (int j = 0; j < b.shape[1]; ++j) c.at(r, a.shape[1] + j) = b.at(r, j);
          }
          return c;
        }
        fail(n, id, "concat shapes " + shape_str(a) + " vs " + shape_str(b));
      }

      case Op::Slice: {
        const Tensor& a = in(n, 0);
        if (a.rank() == 1) {
          if (n.axis != 0 || n.lo < 0 || n.hi > a.shape[0] || n.lo >= n.hi)
            fail(n, id, "slice range");
          Tensor c = Tensor::zeros({n.hi - n.lo});
          std::copy(a.data.begin() + n.lo, a.data.begin() + n.hi, c.data.begin());
          return c;
        }
        if (n.axis == 0) {
          if (n.lo < 0 || n.hi > a.shape[0] || n.lo >= n.hi) fail(n, id, "slice range");
          std::vector<int> shape = (n.squeeze && n.hi - n.lo == 1)
                                       ? std::vector<int>{a.shape[1]}
                                       : std::vector<int>{n.hi - n.lo, a.shape[1]};
          Tensor c = Tensor::zeros(std::move(shape));
          std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(n.lo) * a.shape[1],
                    a.data.begin() + static_cast<std::ptrdiff_t>(n.hi) * a.shape[1],
                    c.data.begin());
          return c;
        }
        if (n.lo < 0 || n.hi > a.shape[1] || n.lo >= n.hi) fail(n, id, "slice range");
        Tensor c = Tensor::zeros({a.shape[0], n.hi - n.lo});
        for (int r = 0; r < a.shape[0]; ++r)
          for (int j = n.lo; j < n.hi; ++j) c.at(r, j - n.lo) = a.at(r, j);
        return c;
      }

      case Op::Sum: {
        const Tensor& a = in(n, 0);
        double acc = 0.0;
        for (double v : a.data) acc += v;
        return Tensor::scalar(acc);
      }

      case Op::Scale: {
        Tensor c = in(n, 0);
        for (double& v : c.data) v *= n.factor;
        return c;
      }

      case Op::Transpose: {
        const Tensor& a = in(n, 0);
        if (a.rank() != 2) fail(n, id, "transpose needs rank 2");
        Tensor c = Tensor::zeros({a.shape[1], a.shape[0]});
        for (int r = 0; r < a.shape[0]; ++r)
          for (int j = 0; j < a.shape[1]; ++j) c.at(j, r) = a.at(r, j);
        return c;
      }

      case Op::Gather: {
        const Tensor& a = in(n, 0);
        Tensor c = Tensor::zeros({static_cast<int>(n.ints.size())});
        for (std::size_t i = 0; i < n.ints.size(); ++i) {
          const int k = n.ints[i];
          if (k < 0 || k >= static_cast<int>(a.numel())) fail(n, id, "gather index");
          c.data[i] = a.data[static_cast<std::size_t>(k)];
        }
        return c;
      }

      case Op::LayerNorm: {
        const Tensor& x = in(n, 0);
        const Tensor& g = in(n, 1);
        const Tensor& b = in(n, 2);
        const int rows = x.rank() == 2 ? x.shape[0] : 1;
        const int cols = x.rank() == 2 ? x.shape[1] : x.shape[0];
        if (g.numel() != static_cast<std::size_t>(cols) || b.numel() != g.numel())
          fail(n, id, "layernorm gain/bias size");
        Tensor c = x;
        for (int r = 0; r < rows; ++r) {
          double* p = c.data.data() + static_cast<std::size_t>(r) * cols;
          double mean = 0.0;
          for (int j = 0; j < cols; ++j) mean += p[j];
          mean /= cols;
          double var = 0.0;
          for (int j = 0; j < cols; ++j) var += (p[j] - mean) * (p[j] - mean);
          var /= cols;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          for (int j = 0; j < cols; ++j)
            p[j] = g.at(j) * (p[j] - mean) * inv + b.at(j);
        }
        return c;
      }
    }
    fail(n, id, "unhandled op");
  }

  static void mm(const double* a, int n, int k, const double* b, int m, double* c) {
    for (int i = 0; i < n; ++i) {
      const double* ai = a + static_cast<std::ptrdiff_t>(i) * k;
      double* ci = c + static_cast<std::ptrdiff_t>(i) * m;
      for (int kk = 0; kk < k; ++kk) {
        const double av = ai[kk];
        if (av == 0.0) continue;
        const double* bk = b + static_cast<std::ptrdiff_t>(kk) * m;
        for (int j = 0; j < m; ++j) ci[j] += av * bk[j];
      }
    }
  }

  void accum(NodeId id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(value(id).shape);
    for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
  }

  void propagate(const Node& n, NodeId id) {
    const Tensor& up = n.grad;
    switch (n.op) {
      case Op::Input:
      case Op::Const:
      case Op::Param:
        return;

      case Op::MatMul: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        const int N = a.rank() == 2 ? a.shape[0] : 1;
        const int K = a.rank() == 2 ? a.shape[1] : a.shape[0];
        const int M = b.rank() == 2 ? b.shape[1] : 1;
        // dA = up . B^T ; dB = A^T . up   (ranks reshaped implicitly)
        Tensor da = Tensor::zeros(a.shape);
        Tensor db = Tensor::zeros(b.shape);
        const double* U = up.data.data();
        const double* A = a.data.data();
        const double* B = b.data.data();
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < M; ++j) {
            const double u = U[static_cast<std::ptrdiff_t>(i) * M + j];
            if (u == 0.0) continue;
            for (int kk = 0; kk < K; ++kk) {
              da.data[static_cast<std::size_t>(i) * K + kk] +=
                  u * B[static_cast<std::ptrdiff_t>(kk) * M + j];
              db.data[static_cast<std::size_t>(kk) * M + j] +=
                  u * A[static_cast<std::ptrdiff_t>(i) * K + kk];
            }
          }
        accum(n.inputs[0], da);
        accum(n.inputs[1], db);
        return;
      }

      case Op::Add: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        accum(n.inputs[0], up);
        if (a.same_shape(b)) {
          accum(n.inputs[1], up);
        } else {
          Tensor db = Tensor::zeros(b.shape);
          for (int r = 0; r < a.shape[0]; ++r)
            for (int j = 0; j < a.shape[1]; ++j) db.at(j) += up.at(r, j);
          accum(n.inputs[1], db);
        }
        return;
      }

      case Op::Mul: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        Tensor da = up, db = up;
        for (std::size_t i = 0; i < up.data.size(); ++i) {
          da.data[i] *= b.data[i];
          db.data[i] *= a.data[i];
        }
        accum(n.inputs[0], da);
        accum(n.inputs[1], db);
        return;
      }

      case Op::Tanh: {
        Tensor d = up;
        for (std::size_t i = 0; i < d.data.size(); ++i) {
          const double y = n.value.data[i];
          d.data[i] *= 1.0 - y * y;
        }
        accum(n.inputs[0], d);
        return;
      }

      case Op::Sigmoid: {
        Tensor d = up;
        for (std::size_t i = 0; i < d.data.size(); ++i) {
          const double y = n.value.data[i];
          d.data[i] *= y * (1.0 - y);
        }
        accum(n.inputs[0], d);
        return;
      }

      case Op::Softmax: {
        const Tensor& y = n.value;
        const int rows = y.rank() == 2 ? y.shape[0] : 1;
        const int cols = y.rank() == 2 ? y.shape[1] : y.shape[0];
        Tensor d = Tensor::zeros(y.shape);
        for (int r = 0; r < rows; ++r) {
          const int m = n.causal ? r + 1 : cols;
          const double* yv = y.data.data() + static_cast<std::size_t>(r) * cols;
          const double* uv = up.data.data() + static_cast<std::size_t>(r) * cols;
          double dot = 0.0;
          for (int j = 0; j < m; ++j) dot += uv[j] * yv[j];
          double* dv = d.data.data() + static_cast<std::size_t>(r) * cols;
          for (int j = 0; j < m; ++j) dv[j] = yv[j] * (uv[j] - dot);
        }
        accum(n.inputs[0], d);
        return;
      }

      case Op::LogSoftmax: {
        const Tensor& y = n.value;
        const int rows = y.rank() == 2 ? y.shape[0] : 1;
        const int cols = y.rank() == 2 ? y.shape[1] : y.shape[0];
        Tensor d = Tensor::zeros(y.shape);
        for (int r = 0; r < rows; ++r) {
          const int m = n.causal ? r + 1 : cols;
          const double* yv = y.data.data() + static_cast<std::size_t>(r) * cols;
          const double* uv = up.data.data() + static_cast<std::size_t>(r) * cols;
          double s = 0.0;
          for (int j = 0; j < m; ++j) s += uv[j];
          double* dv = d.data.data() + static_cast<std::size_t>(r) * cols;
          for (int j = 0; j < m; ++j) dv[j] = uv[j] - std::exp(yv[j]) * s;
        }
        accum(n.inputs[0], d);
        return;
      }

      case Op::Embed: {
        const Tensor& t = in(n, 0);
        Tensor dt = Tensor::zeros(t.shape);
        const int E = t.shape[1];
        for (std::size_t r = 0; r < n.ints.size(); ++r)
          for (int j = 0; j < E; ++j)
            dt.at(n.ints[r], j) += up.at(static_cast<int>(r), j);
        accum(n.inputs[0], dt);
        return;
      }

      case Op::Concat: {
        const Tensor& a = in(n, 0);
        const Tensor& b = in(n, 1);
        if (a.rank() == 1 || n.axis == 0) {
          Tensor da = Tensor::zeros(a.shape), db = Tensor::zeros(b.shape);
          std::copy(up.data.begin(), up.data.begin() + a.numel(), da.data.begin());
          std::copy(up.data.begin() + a.numel(), up.data.end(), db.data.begin());
          accum(n.inputs[0], da);
          accum(n.inputs[1], db);
        } else {
          Tensor da = Tensor::zeros(a.shape), db = Tensor::zeros(b.shape);
          for (int r = 0; r < a.shape[0]; ++r) {
            for (int j = 0; j < a.shape[1]; ++j) da.at(r, j) = up.at(r, j);
            for (int j = 0; j < b.shape[1]; ++j) db.at(r, j) = up.at(r, a.shape[1] + j);
          }
          accum(n.inputs[0], da);
          accum(n.inputs[1], db);
        }
        return;
      }

      case Op::Slice: {
        const Tensor& a = in(n, 0);
        Tensor da = Tensor::zeros(a.shape);
        if (a.rank() == 1) {
          for (int i = n.lo; i < n.hi; ++i) da.at(i) = up.at(i - n.lo);
        } else if (n.axis == 0) {
          for (int r = n.lo; r < n.hi; ++r)
            for (int j = 0; j < a.shape[1]; ++j) {
              const double u = up.rank() == 2 ? up.at(r - n.lo, j) : up.at(j);
              da.at(r, j) = u;
            }
        } else {
          for (int r = 0; r < a.shape[0]; ++r)
            for (int j = n.lo; j < n.hi; ++j) {
              const double u = up.rank() == 2 ? up.at(r, j - n.lo) : up.at(j - n.lo);
              da.at(r, j) = u;
            }
        }
        accum(n.inputs[0], da);
        return;
      }

      case Op::Sum: {
        const Tensor& a = in(n, 0);
        Tensor da(a.shape, std::vector<double>(a.numel(), up.data[0]));
        accum(n.inputs[0], da);
        return;
      }

      case Op::Scale: {
        Tensor d = up;
        for (double& v : d.data) v *= n.factor;
        accum(n.inputs[0], d);
        return;
      }

      case Op::Transpose: {
        const Tensor& a = in(n, 0);
        Tensor da = Tensor::zeros(a.shape);
        for (int r = 0; r < a.shape[0]; ++r)
          for (int j = 0; j < a.shape[1]; ++j) da.at(r, j) = up.at(j, r);
        accum(n.inputs[0], da);
        return;
      }

      case Op::Gather: {
        const Tensor& a = in(n, 0);
        Tensor da = Tensor::zeros(a.shape);
        for (std::size_t i = 0; i < n.ints.size(); ++i)
          da.data[static_cast<std::size_t>(n.ints[i])] += up.data[i];
        accum(n.inputs[0], da);
        return;
      }

      case Op::LayerNorm: {
        const Tensor& x = in(n, 0);
        const Tensor& g = in(n, 1);
        const int rows = x.rank() == 2 ? x.shape[0] : 1;
        const int cols = x.rank() == 2 ? x.shape[1] : x.shape[0];
        Tensor dx = Tensor::zeros(x.shape);
        Tensor dg = Tensor::zeros(g.shape);
        Tensor db = Tensor::zeros(g.shape);
        for (int r = 0; r < rows; ++r) {
          const double* xp = x.data.data() + static_cast<std::size_t>(r) * cols;
          const double* uv = up.data.data() + static_cast<std::size_t>(r) * cols;
          double mean = 0.0;
          for (int j = 0; j < cols; ++j) mean += xp[j];
          mean /= cols;
          double var = 0.0;
          for (int j = 0; j < cols; ++j) var += (xp[j] - mean) * (xp[j] - mean);
          var /= cols;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          // xhat_j = (x_j - mean) * inv
          double sum_ug = 0.0, sum_ugx = 0.0;
          for (int j = 0; j < cols; ++j) {
            const double xh = (xp[j] - mean) * inv;
            const double ug = uv[j] * g.at(j);
            sum_ug += ug;
            sum_ugx += ug * xh;
            dg.at(j) += uv[j] * xh;
            db.at(j) += uv[j];
          }
          double* dxp = dx.data.data() + static_cast<std::size_t>(r) * cols;
          for (int j = 0; j < cols; ++j) {
            const double xh = (xp[j] - mean) * inv;
            const double ug = uv[j] * g.at(j);
            dxp[j] = inv * (ug - sum_ug / cols - xh * sum_ugx / cols);
          }
        }
        accum(n.inputs[0], dx);
        accum(n.inputs[1], dg);
        accum(n.inputs[2], db);
        return;
      }
    }
  }
};

}  // namespace seqlab
