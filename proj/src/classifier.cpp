#include "donet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "donet/ops.hpp"

namespace donet {

std::vector<double> Classifier::per_sample_loss(const Tensor& x,
                                                std::span<const int> labels) const {
  const Tensor p = probabilities(x);
  const std::size_t k = p.dim(1);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double pi = p[i * k + static_cast<std::size_t>(labels[i])];
    out[i] = -std::log(std::max(pi, std::numeric_limits<double>::min()));
  }
  return out;
}

Var ModelClassifier::loss(Graph& g, Var x, std::span<const int> labels) const {
  // Same arithmetic as a one-member ensemble, so ensembles of copies attack
  // along the same directions.
  ParamBinder bind(g, false);
  return nll_from_probs(softmax(model_.forward(bind, x)), labels);
}

Tensor ModelClassifier::probabilities(const Tensor& x) const {
  return softmax_rows(model_.logits(x));
}

std::vector<double> ModelClassifier::per_sample_loss(const Tensor& x,
                                                     std::span<const int> labels) const {
  return cross_entropy_rows(model_.logits(x), labels);
}

EnsembleClassifier::EnsembleClassifier(std::vector<const Model*> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("ensemble has no members");
  for (const Model* m : members_) {
    if (!(m->config == members_.front()->config)) {
      throw std::invalid_argument("ensemble members have different architectures");
    }
  }
}

Var EnsembleClassifier::mean_probabilities(Graph& g, Var x) const {
  std::vector<Var> probs;
  probs.reserve(members_.size());
  for (const Model* m : members_) {
    ParamBinder bind(g, false);
    probs.push_back(softmax(m->forward(bind, x)));
  }
  return mean_of(probs);
}

Var EnsembleClassifier::loss(Graph& g, Var x, std::span<const int> labels) const {
  return nll_from_probs(mean_probabilities(g, x), labels);
}

Tensor EnsembleClassifier::probabilities(const Tensor& x) const {
  Graph g;
  return mean_probabilities(g, g.constant(x)).value();
}

}  // namespace donet
