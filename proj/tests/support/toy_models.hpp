#pragma once

#include <span>
#include <vector>

#include "donet/classifier.hpp"
#include "donet/ops.hpp"

namespace donet::testing {

// logits = x·W + b over flattened samples; W is D×K.
class LinearClassifier : public Classifier {
 public:
  LinearClassifier(Tensor w, Tensor b) : w_(std::move(w)), b_(std::move(b)) {}

  Var loss(Graph& g, Var x, std::span<const int> labels) const override {
    return softmax_cross_entropy(logits(g, x), labels);
  }
  Tensor probabilities(const Tensor& x) const override {
    Graph g;
    return softmax_rows(logits(g, g.constant(x)).value());
  }
  std::size_t classes() const override { return w_.dim(1); }

 private:
  Var logits(Graph& g, Var x) const {
    const std::size_t n = x.shape()[0];
    Var flat = reshape(x, {n, x.value().size() / n});
    return add_bias(matmul(flat, g.constant(w_)), g.constant(b_));
  }

  Tensor w_;
  Tensor b_;
};

}  // namespace donet::testing
