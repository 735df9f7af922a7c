#include "donet/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace donet::perturb {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::FGSM: return "fgsm";
    case AttackKind::IFGSM: return "ifgsm";
    case AttackKind::PGD: return "pgd";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "fgsm") return AttackKind::FGSM;
  if (name == "ifgsm") return AttackKind::IFGSM;
  if (name == "pgd") return AttackKind::PGD;
  throw std::invalid_argument("unknown attack '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("attack epsilon must lie in [0, 1]");
  }
  if (kind == AttackKind::FGSM) return;
  if (iters < 1) throw std::invalid_argument("iterative attacks need iters >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("attack alpha must be > 0");
  if (epsilon > 0.0 && alpha > 2.0 * epsilon) {
    throw std::invalid_argument("attack alpha exceeds twice epsilon");
  }
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Shot: return "shot";
    case NoiseKind::Impulse: return "impulse";
    case NoiseKind::Speckle: return "speckle";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "shot") return NoiseKind::Shot;
  if (name == "impulse") return NoiseKind::Impulse;
  if (name == "speckle") return NoiseKind::Speckle;
  throw std::invalid_argument("unknown noise '" + std::string(name) + "'");
}

double default_severity(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return 0.08;
    case NoiseKind::Speckle: return 0.15;
    case NoiseKind::Shot: return 60.0;
    case NoiseKind::Impulse: return 0.03;
  }
  return 0.0;
}

void NoiseConfig::validate() const {
  if (!(severity >= 0.0)) throw std::invalid_argument("noise severity must be >= 0");
  if (kind == NoiseKind::Shot && !(severity > 0.0)) {
    throw std::invalid_argument("shot noise needs a positive photon scale");
  }
  if (kind == NoiseKind::Impulse && severity > 0.5) {
    throw std::invalid_argument("impulse probability must be <= 0.5");
  }
}

namespace {

double clamp01(double v) { return std::min(std::max(v, 0.0), 1.0); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_inputs(const Tensor& x, std::span<const int> labels) {
  if (x.rank() < 2 || x.dim(0) != labels.size()) {
    throw std::invalid_argument("attack input " + shape_string(x.shape()) +
                                " does not match " + std::to_string(labels.size()) +
                                " labels");
  }
}

struct LossAndGrad {
  double loss;
  Tensor grad;
};

LossAndGrad loss_and_grad(const Classifier& model, const Tensor& x,
                          std::span<const int> labels, std::size_t iteration) {
  Graph g;
  Var xv = g.leaf(x);
  Var l = model.loss(g, xv, labels);
  g.backward(l);
  Tensor grad = g.grad(xv.id);
  if (!grad.all_finite()) {
    throw std::runtime_error("non-finite input gradient at attack iteration " +
                             std::to_string(iteration));
  }
  return {l.value().item(), std::move(grad)};
}

double batch_loss(const Classifier& model, const Tensor& x, std::span<const int> labels) {
  Graph g;
  return model.loss(g, g.constant(x), labels).value().item();
}

}  // namespace

Tensor input_gradient(const Classifier& model, const Tensor& x,
                      std::span<const int> labels) {
  check_inputs(x, labels);
  return loss_and_grad(model, x, labels, 0).grad;
}

Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels,
            double epsilon) {
  const Tensor g = input_gradient(model, x, labels);
  Tensor out = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = clamp01(x[i] + epsilon * sign(g[i]));
  return out;
}

Tensor ifgsm_from(const Classifier& model, const Tensor& x, const Tensor& start,
                  std::span<const int> labels, double epsilon, double alpha,
                  std::size_t iters, std::vector<double>* loss_trace) {
  check_inputs(x, labels);
  if (start.shape() != x.shape()) throw std::invalid_argument("start shape mismatch");
  if (loss_trace) loss_trace->clear();
  Tensor cur = start;
  for (std::size_t m = 0; m < iters; ++m) {
    const LossAndGrad lg = loss_and_grad(model, cur, labels, m);
    if (loss_trace) loss_trace->push_back(lg.loss);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      double v = cur[i] + alpha * sign(lg.grad[i]);
      v = std::min(std::max(v, x[i] - epsilon), x[i] + epsilon);
      cur[i] = clamp01(v);
    }
  }
  if (loss_trace) loss_trace->push_back(batch_loss(model, cur, labels));
  return cur;
}

Tensor ifgsm(const Classifier& model, const Tensor& x, std::span<const int> labels,
             double epsilon, double alpha, std::size_t iters,
             std::vector<double>* loss_trace) {
  return ifgsm_from(model, x, x, labels, epsilon, alpha, iters, loss_trace);
}

Tensor pgd_from_offset(const Classifier& model, const Tensor& x, const Tensor& delta,
                       std::span<const int> labels, double epsilon, double alpha,
                       std::size_t iters) {
  if (delta.shape() != x.shape()) throw std::invalid_argument("offset shape mismatch");
  Tensor start = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i) start[i] = clamp01(x[i] + delta[i]);
  return ifgsm_from(model, x, start, labels, epsilon, alpha, iters);
}

Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> labels,
           double epsilon, double alpha, std::size_t iters, std::uint64_t seed,
           std::size_t first_index) {
  check_inputs(x, labels);
  const std::size_t rows = x.dim(0);
  const std::size_t per = x.size() / rows;
  Tensor delta = Tensor::like(x);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    Rng rng = make_rng(sub_seed(seed, static_cast<std::uint64_t>(first_index + r)));
    for (std::size_t k = 0; k < per; ++k) delta[r * per + k] = epsilon * unit(rng);
  }
  return pgd_from_offset(model, x, delta, labels, epsilon, alpha, iters);
}

Tensor attack(const Classifier& model, const Tensor& x, std::span<const int> labels,
              const AttackConfig& cfg, std::size_t first_index) {
  cfg.validate();
  switch (cfg.kind) {
    case AttackKind::FGSM:
      return fgsm(model, x, labels, cfg.epsilon);
    case AttackKind::IFGSM:
      return ifgsm(model, x, labels, cfg.epsilon, cfg.alpha, cfg.iters);
    case AttackKind::PGD:
      return pgd(model, x, labels, cfg.epsilon, cfg.alpha, cfg.iters, cfg.seed,
                 first_index);
  }
  throw std::logic_error("unhandled attack kind");
}

double poisson_sample(double mean, Rng& gen) {
  if (mean <= 0.0) return 0.0;
  if (mean < 30.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(gen);
    double p = std::exp(-mean);
    double cdf = p;
    double k = 0.0;
    while (u > cdf && p > 0.0) {
      k += 1.0;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  return std::max(0.0, std::round(mean + std::sqrt(mean) * normal(gen)));
}

Tensor apply_noise(const Tensor& x, const NoiseConfig& cfg, std::size_t first_index) {
  cfg.validate();
  if (x.rank() < 1) throw std::invalid_argument("noise needs a batched input");
  const std::size_t rows = x.dim(0);
  const std::size_t per = x.size() / rows;
  Tensor out = Tensor::like(x);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = cfg.severity;
  for (std::size_t r = 0; r < rows; ++r) {
    Rng rng = make_rng(sub_seed(cfg.seed, static_cast<std::uint64_t>(first_index + r)));
    for (std::size_t k = 0; k < per; ++k) {
      const std::size_t i = r * per + k;
      const double v = x[i];
      double y = v;
      switch (cfg.kind) {
        case NoiseKind::Gaussian:
          y = v + s * normal(rng);
          break;
        case NoiseKind::Speckle:
          y = v + v * s * normal(rng);
          break;
        case NoiseKind::Shot:
          y = poisson_sample(v * s, rng) / s;
          break;
        case NoiseKind::Impulse:
          if (unit(rng) < s) y = unit(rng) < 0.5 ? 0.0 : 1.0;
          break;
      }
      out[i] = clamp01(y);
    }
  }
  return out;
}

}  // namespace donet::perturb
