#pragma once

// Gradient attacks (FGSM, IFGSM, PGD) and stochastic noise on inputs in [0,1].

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "donet/classifier.hpp"
#include "donet/rng.hpp"
#include "donet/tensor.hpp"

namespace donet::perturb {

enum class AttackKind { FGSM, IFGSM, PGD };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::FGSM;
  double epsilon = 2.0 / 255.0;
  double alpha = 2.0 / 255.0;
  std::size_t iters = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class NoiseKind { Gaussian, Shot, Impulse, Speckle };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);
double default_severity(NoiseKind kind);

struct NoiseConfig {
  NoiseKind kind = NoiseKind::Gaussian;
  double severity = 0.08;
  std::uint64_t seed = 0;

  void validate() const;
};

// ∇ₓ of the classifier's batch loss.
Tensor input_gradient(const Classifier& model, const Tensor& x,
                      std::span<const int> labels);

// clamp(x + ε·sign(∇ₓL)); sign(0) = 0.
Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels,
            double epsilon);

// Iterates from `start`, projecting onto [x − ε, x + ε] ∩ [0,1] after each
// signed step. When `loss_trace` is given it receives the batch loss at every
// iterate, starting with `start`.
Tensor ifgsm_from(const Classifier& model, const Tensor& x, const Tensor& start,
                  std::span<const int> labels, double epsilon, double alpha,
                  std::size_t iters, std::vector<double>* loss_trace = nullptr);

Tensor ifgsm(const Classifier& model, const Tensor& x, std::span<const int> labels,
             double epsilon, double alpha, std::size_t iters,
             std::vector<double>* loss_trace = nullptr);

// PGD from clamp(x + δ). δ is U[−ε, ε] per component, drawn from a generator
// seeded by (seed, first_index + row) so each sample's start is independent
// of batching.
Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> labels,
           double epsilon, double alpha, std::size_t iters, std::uint64_t seed,
           std::size_t first_index = 0);

// PGD with an explicit initial offset (same shape as x).
Tensor pgd_from_offset(const Classifier& model, const Tensor& x, const Tensor& delta,
                       std::span<const int> labels, double epsilon, double alpha,
                       std::size_t iters);

Tensor attack(const Classifier& model, const Tensor& x, std::span<const int> labels,
              const AttackConfig& cfg, std::size_t first_index = 0);

// Per-sample generators are seeded by (seed, first_index + row).
Tensor apply_noise(const Tensor& x, const NoiseConfig& cfg, std::size_t first_index = 0);

// Poisson draw: inversion below mean 30, rounded normal approximation above.
double poisson_sample(double mean, Rng& gen);

}  // namespace donet::perturb
