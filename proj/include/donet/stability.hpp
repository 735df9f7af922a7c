#pragma once

// Local stability of autonomous dynamics dx/dt = f(x) and of their damped
// counterparts dx/dt = −λx + ρ(λ)·f(x).

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "donet/graph.hpp"
#include "donet/linalg.hpp"
#include "donet/ode.hpp"
#include "json.hpp"

namespace donet::stability {

using linalg::Complex;
using linalg::Matrix;
using Vec = std::vector<double>;

struct DynamicsHandle {
  std::size_t dimension = 0;
  std::function<Vec(const Vec&)> f;
  // Optional graph form of f over a {dimension} tensor; enables the autodiff
  // Jacobian.
  std::function<Var(Graph&, Var)> tensor_f;

  Vec operator()(const Vec& x) const;
};

// f(x) = A·x, with both evaluation paths.
DynamicsHandle linear_dynamics(const Matrix& a);

// Built-in systems selectable by id:
//   "linear:<a,b;c,d>"      f(x) = A·x
//   "cubic"                 (y − x³, −x − y)
//   "quadratic"             x² − 4 (scalar)
//   "neg_identity:<n>"      −x
DynamicsHandle dynamics_by_id(std::string_view id);

struct NewtonOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-10;
  double fd_step = 1e-6;
};

// Damped Newton on f(x) = 0 with a central-difference Jacobian. Throws
// std::runtime_error on a singular step (with a condition estimate in the
// message) or after max_iterations.
Vec find_equilibrium(const DynamicsHandle& f, Vec x_init,
                     const NewtonOptions& options = {});

Matrix jacobian_fd(const DynamicsHandle& f, const Vec& x, double step = 1e-6);
Matrix jacobian_autodiff(const DynamicsHandle& f, const Vec& x);
// Autodiff when the handle has a graph form, finite differences otherwise.
Matrix jacobian(const DynamicsHandle& f, const Vec& x);

// {ρ(λ)ν − λ : ν ∈ eig(J)}, sorted by (Re, Im).
std::vector<Complex> damped_spectrum(const Matrix& j, double lambda, ode::RhoKind rho);
std::vector<Complex> damp(const std::vector<Complex>& raw, double lambda, double rho_value);

struct Frontier {
  double bound = 0.0;             // 1 + λ/Re(ν)
  bool rho_below_bound = false;   // ρ < bound
  bool satisfied = false;         // Re(ρν − λ) < Re(ν)
};

// Throws when Re(ν) = 0.
Frontier rho_stability_frontier(Complex nu, double lambda, double rho_value);

double max_real(const std::vector<Complex>& spectrum);

struct StabilityReport {
  double lambda = 0.0;
  ode::RhoKind rho = ode::RhoKind::One;
  Vec equilibrium;
  Matrix jacobian;
  std::vector<Complex> raw_spectrum;
  std::vector<Complex> damped_spectrum;
  double max_re_raw = 0.0;
  double max_re_damped = 0.0;
  bool stable_raw = false;
  bool stable_damped = false;
};

StabilityReport analyze_jacobian(Vec equilibrium, Matrix j, double lambda,
                                 ode::RhoKind rho);
StabilityReport analyze(const DynamicsHandle& f, const Vec& x_init, double lambda,
                        ode::RhoKind rho);

nlohmann::json to_json(const StabilityReport& report);

// "z^3-6z^2+11z-6" → monic coefficients c[0..n−1] (here {−6, 11, −6}).
std::vector<double> parse_polynomial(std::string_view text);

// Matrix source strings:
//   "companion:<polynomial>"
//   "diag:<v1,v2,...>"
//   "rows:<a,b;c,d>"
Matrix parse_matrix(std::string_view text);

}  // namespace donet::stability
