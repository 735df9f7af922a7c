#pragma once

#include <span>
#include <vector>

#include "donet/blocks.hpp"
#include "donet/graph.hpp"
#include "donet/tensor.hpp"

namespace donet {

// Anything attacks and evaluation can run against: a differentiable batch
// loss and class probabilities. Samples are treated independently.
class Classifier {
 public:
  virtual ~Classifier() = default;

  // Mean cross-entropy over the batch, recorded on `g` with `x` as input.
  virtual Var loss(Graph& g, Var x, std::span<const int> labels) const = 0;
  // N×K class probabilities.
  virtual Tensor probabilities(const Tensor& x) const = 0;
  virtual std::size_t classes() const = 0;

  // Per-sample cross-entropy; the default derives it from probabilities.
  virtual std::vector<double> per_sample_loss(const Tensor& x,
                                              std::span<const int> labels) const;
};

// Eval-mode wrapper around a single model; predictions use softmax of logits.
class ModelClassifier : public Classifier {
 public:
  explicit ModelClassifier(const Model& model) : model_(model) {}

  Var loss(Graph& g, Var x, std::span<const int> labels) const override;
  Tensor probabilities(const Tensor& x) const override;
  std::size_t classes() const override { return model_.config.classes; }
  std::vector<double> per_sample_loss(const Tensor& x,
                                      std::span<const int> labels) const override;

  const Model& model() const { return model_; }

 private:
  const Model& model_;
};

// Mean of member softmax vectors; the loss is cross-entropy of that mean.
class EnsembleClassifier : public Classifier {
 public:
  // Throws if members are empty or their configurations differ.
  explicit EnsembleClassifier(std::vector<const Model*> members);

  Var loss(Graph& g, Var x, std::span<const int> labels) const override;
  Tensor probabilities(const Tensor& x) const override;
  std::size_t classes() const override { return members_.front()->config.classes; }

  std::size_t size() const { return members_.size(); }

 private:
  Var mean_probabilities(Graph& g, Var x) const;
  std::vector<const Model*> members_;
};

}  // namespace donet
