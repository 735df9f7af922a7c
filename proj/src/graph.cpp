#include "donet/graph.hpp"

#include <stdexcept>
#include <string>

namespace donet {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::BatchNorm: return "batch_norm";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::Softmax: return "softmax";
    case OpKind::NllFromProbs: return "nll_from_probs";
    case OpKind::ScaleRows: return "scale_rows";
    case OpKind::SpatialMean: return "spatial_mean";
    case OpKind::Reshape: return "reshape";
    case OpKind::MeanOf: return "mean_of";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (graph == nullptr) throw std::logic_error("Var is not bound to a graph");
  return graph->value(id);
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back({OpKind::Leaf, {}, std::move(value), {}, nullptr, true});
  return {this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  nodes_.push_back({OpKind::Constant, {}, std::move(value), {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Graph::record(OpKind kind, Tensor value, std::vector<std::size_t> parents,
                  BackwardFn backward) {
  const std::size_t id = nodes_.size();
  bool needs = false;
  for (auto p : parents) {
    if (p >= id) {
      throw std::logic_error("graph node parent " + std::to_string(p) +
                             " is not older than node " + std::to_string(id));
    }
    needs = needs || nodes_[p].requires_grad;
  }
  nodes_.push_back({kind, std::move(parents), std::move(value), {},
                    needs ? std::move(backward) : nullptr, needs});
  return {this, id};
}

void Graph::backward(Var root) {
  if (root.graph != this || root.id >= nodes_.size()) {
    throw std::invalid_argument("backward root does not belong to this graph");
  }
  const Tensor& root_value = nodes_[root.id].value;
  if (root_value.size() != 1) {
    throw std::invalid_argument("backward root must be scalar, got shape " +
                                shape_string(root_value.shape()));
  }
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    Node& node = nodes_[k];
    if (node.requires_grad && k <= root.id) {
      node.grad = Tensor::like(node.value);
    } else {
      node.grad = Tensor();
    }
  }
  has_gradients_ = true;
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad[0] = 1.0;
  for (std::size_t k = root.id + 1; k-- > 0;) {
    Node& node = nodes_[k];
    if (node.requires_grad && node.backward) node.backward(*this, k);
  }
}

const Tensor& Graph::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (!has_gradients_) throw std::logic_error("no backward sweep has run");
  if (!node.requires_grad || node.grad.empty()) {
    throw std::logic_error("node " + std::to_string(id) + " (" +
                           std::string(to_string(node.kind)) +
                           ") has no gradient");
  }
  return node.grad;
}

Tensor* Graph::grad_target(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad || node.grad.empty()) return nullptr;
  return &node.grad;
}

}  // namespace donet
