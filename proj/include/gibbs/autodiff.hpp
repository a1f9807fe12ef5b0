#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <deque>
#include <vector>

#include "gibbs/tensor.hpp"

namespace gibbs {

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad();
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient of the last backward root with respect to this node (zeros if unreached).
  Tensor grad() const;
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of a single forward pass. Nodes are appended in creation order, which is a
/// topological order, so backward is one reverse sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Constant that refers to `value` without copying; `value` must outlive the graph.
  Var constant_ref(const Tensor& value);
  /// Leaf that records a gradient but is not tied to a Parameter.
  Var variable(Tensor value);
  /// Leaf whose gradient is added into `p.grad` by backward(). `p` must outlive the graph.
  Var parameter(Parameter& p);

  /// Adds an op node. The backward closure is dropped when no parent needs a gradient.
  Var make(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  void backward(Var root);

  const Tensor& value(std::size_t id) const;
  /// Lazily zero-initialized gradient buffer of node `id`.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // deque keeps value references stable while the tape grows
};

// Differentiable ops. Shapes: matrices are [rows x cols], vectors [n], scalars [].
Var matmul(Var a, Var b);     // [B,N]*[N,M]
Var matmul_nt(Var a, Var b);  // [B,N]*[M,N]^T
Var add_bias(Var x, Var bias);  // [B,M] + [M] broadcast over rows
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
/// Natural log; inputs must be positive.
Var log(Var a);
/// out[b,k] = max(x[b,2k], x[b,2k+1]); ties route the gradient to unit 2k.
Var maxout2(Var x);
Var sum(Var a);
Var mean(Var a);
/// [B,M] -> [B]
Var row_sum(Var a);
/// Rows of a matrix (or entries of a vector) picked by index; gradients scatter-add back.
Var gather_rows(Var x, const std::vector<std::size_t>& rows);

inline constexpr double kProbClamp = 1e-7;

/// Per-row binary cross-entropy sum_j -x log q - (1-x) log(1-q), q = clamp(p, 1e-7, 1-1e-7).
/// [B,N] -> [B]; the gradient is that of the clamped expression (zero where clamped).
Var bce_rows(Var p, const Tensor& x);
/// Per-row -log softmax(logits)[label]. [B,K] -> [B]
Var softmax_xent_rows(Var logits, const std::vector<int>& labels);
/// Per-column de-mean and divide by the root second moment of the batch; no learned affine.
Var batchnorm(Var h, double eps = 1e-12);

/// Row-wise softmax of a value.
Tensor softmax_rows(const Tensor& logits);

}  // namespace gibbs
