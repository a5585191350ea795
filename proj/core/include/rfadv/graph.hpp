#pragma once

// Tape-based reverse-mode differentiation over Tensors.
//
// A Graph records every operation as a node in creation order. Parents are
// always created before children, so walking the tape backwards is a valid
// reverse topological order; backward() visits each node reachable from the
// loss exactly once.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "rfadv/tensor.hpp"

namespace rfadv {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Tensor& grad() const;
  const std::vector<int>& shape() const;
  bool valid() const { return graph != nullptr && id >= 0; }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding data. Its gradient is only tracked when requires_grad.
  Var input(Tensor value, bool requires_grad = false);
  /// Leaf bound to a parameter. backward() adds the node gradient into
  /// param.grad unless the parameter is frozen.
  Var parameter(Parameter& param);

  /// Populates gradients of every node reachable from `loss`. The loss must
  /// hold exactly one element. Node gradients are reset at the start of each
  /// call; parameter gradients accumulate.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, std::vector<int> parents, BackwardFn fn);
  /// Gradient buffer of a node, allocated (zeroed) on first access.
  Tensor& grad_buffer(int id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

enum class Reduction { mean, sum };

namespace ops {

/// Same-padded 1-D cross-correlation. x: [C_in, L] or [N, C_in, L];
/// kernels: [C_out, C_in, K] with K odd; bias: [C_out].
Var conv1d(Var x, Var kernels, Var bias);
/// Transposed convolution: the adjoint of conv1d for the same kernel tensor.
/// y: [C_out, L] or [N, C_out, L] with kernels [C_out, C_in, K]; the result
/// has C_in channels plus bias [C_in].
Var deconv1d(Var y, Var kernels, Var bias);
/// Non-overlapping max pool along the last axis. Ties go to the first index.
Var maxpool1d(Var x, int window = 2);
/// Repeats every element of the last axis `factor` times.
Var upsample1d(Var x, int factor = 2);
/// x: [In] or [N, In]; weights: [Out, In]; bias: [Out].
Var dense(Var x, Var weights, Var bias);
Var relu(Var x);
/// Inverted dropout. Identity when !training or rate == 0.
Var dropout(Var x, float rate, std::mt19937_64& rng, bool training);
/// Collapses all axes but the first: [N, ...] -> [N, prod(...)].
Var flatten(Var x);
Var reshape(Var x, std::vector<int> shape);
/// Softmax over the last axis (max-subtracted).
Var softmax(Var logits);
/// -log p[label] per row of a probability tensor [N, C] (or [C] with one label).
Var cross_entropy(Var probs, const std::vector<int>& labels, Reduction r = Reduction::mean);
/// Fused softmax + cross entropy on logits; gradient is p - onehot(label).
Var softmax_cross_entropy(Var logits, const std::vector<int>& labels,
                          Reduction r = Reduction::mean);
/// Mean squared elementwise difference.
Var mse(Var a, Var b);
Var sum(Var x);

}  // namespace ops
}  // namespace rfadv
