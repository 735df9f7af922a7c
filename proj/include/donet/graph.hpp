#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "donet/tensor.hpp"

namespace donet {

class Graph;

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Relu,
  Sigmoid,
  Scale,
  Sum,
  Mean,
  MatMul,
  AddBias,
  Conv2d,
  BatchNorm,
  SoftmaxCrossEntropy,
  Softmax,
  NllFromProbs,
  ScaleRows,
  SpatialMean,
  Reshape,
  MeanOf,
};

std::string_view to_string(OpKind kind);

// Handle to a node of a Graph. Cheap to copy; valid as long as the graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Append-only tape. Every node's parents have smaller ids, so a reverse sweep
// over ids is a valid topological order for backpropagation.
class Graph {
 public:
  // Accumulates the node's output gradient into its parents' gradients.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  Var record(OpKind kind, Tensor value, std::vector<std::size_t> parents,
             BackwardFn backward);

  // Reverse sweep from a scalar root. Gradients of earlier sweeps are reset.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  // Gradient of the last backward root w.r.t. node `id`. Throws for nodes
  // that do not require a gradient or before any backward sweep.
  const Tensor& grad(std::size_t id) const;
  const Tensor& grad(Var v) const { return grad(v.id); }

  bool requires_grad(std::size_t id) const {
    return nodes_.at(id).requires_grad;
  }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& parents(std::size_t id) const {
    return nodes_.at(id).parents;
  }
  std::size_t size() const { return nodes_.size(); }

  // Used by backward closures: mutable gradient accumulator for a parent.
  // Returns nullptr when the parent does not require a gradient.
  Tensor* grad_target(std::size_t id);
  const Tensor& output_grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> parents;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool has_gradients_ = false;
};

}  // namespace donet
