#pragma once

#include <optional>
#include <span>
#include <vector>

#include "donet/graph.hpp"
#include "donet/tensor.hpp"

namespace donet {

enum class Mode { Train, Eval };

enum class ElementwiseOp { Add, Sub, Mul, Relu, Sigmoid };

// Binary kinds take equal shapes, or one operand with a single element which
// is broadcast. Unary kinds ignore `b`.
Var elementwise(ElementwiseOp op, Var a, std::optional<Var> b = std::nullopt);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var relu(Var x);
Var sigmoid(Var x);

Var scale(Var x, double factor);
Var sum(Var x);
Var mean(Var x);

// a[m×k] · b[k×n]
Var matmul(Var a, Var b);
// x[N×D] + bias[D] broadcast over rows.
Var add_bias(Var x, Var bias);

// x[N×C×H×W] ⊛ w[F×C×3×3]; pad ∈ {0,1}, stride ∈ {1,2}.
Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad);

// Running statistics owned by a normalization layer.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  // Floor on the variance used for scaling: x̂ = (x − μ)/√max(σ², eps).
  double eps = 1e-5;

  static BatchNormState identity(std::size_t channels);
};

// Per-channel normalization over axis 1 (N×D or N×C×H×W). Train mode uses
// batch statistics and updates `state`; eval mode reads `state` only.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);
// As above, with the moving-average update (train mode only) directed to
// `update`, which may be null.
Var batch_norm(Var x, Var gamma, Var beta, const BatchNormState& state,
               Mode mode, BatchNormState* update);

// Mean over rows of −log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
// Row-wise softmax of N×K logits.
Var softmax(Var logits);
// Mean over rows of −log probs[label].
Var nll_from_probs(Var probs, std::span<const int> labels);

// x[N×...] with each sample's slice multiplied by s[i]; s has N elements.
Var scale_rows(Var x, Var s);
// N×C×H×W → N×C, averaging each plane.
Var spatial_mean(Var x);
Var reshape(Var x, Shape shape);
// Elementwise mean of equally-shaped nodes.
Var mean_of(std::span<const Var> xs);

// Graph-free helpers used on evaluation paths.
Tensor softmax_rows(const Tensor& logits);
std::vector<double> cross_entropy_rows(const Tensor& logits,
                                       std::span<const int> labels);
// Ties resolve to the lowest class id.
std::vector<int> argmax_rows(const Tensor& scores);

}  // namespace donet
