#pragma once

// Damped dynamics dx/dt = −λx + ρ(λ)·f(x, t) and its discretizations.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace donet::ode {

using State = std::vector<double>;
using Dynamics = std::function<State(const State& x, double t)>;

enum class RhoKind { One, LambdaPlusOne };

double rho(RhoKind kind, double lambda);
std::string_view to_string(RhoKind kind);
// Accepts "one", "lambda_plus_one" and "lambda+1".
RhoKind parse_rho_kind(std::string_view name);

struct DampedOdeSpec {
  double lambda = 0.0;
  RhoKind rho = RhoKind::One;
  Dynamics f;
  State x0;
  double T = 1.0;
  std::size_t steps = 1;

  void validate() const;
  double dt() const { return T / static_cast<double>(steps); }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;

  const State& back() const { return states.back(); }
};

// (1 − e^{−λΔt})/λ, continuous at λ = 0 where it equals Δt.
double exp_weight(double lambda, double dt);

inline constexpr double kSeriesThreshold = 1e-6;

// x_{n+1} = e^{−λΔt}x_n + ((1 − e^{−λΔt})/λ)·ρ(λ)·f(x_n, t_n)
Trajectory integrate_exponential(const DampedOdeSpec& spec);

enum class EulerVariant { Net1, Net2 };

// Net1: (1 − λΔt)x_n + Δt·f;  Net2: (1 − λΔt)x_n + (1 + λΔt)·f
Trajectory integrate_damped_euler(const DampedOdeSpec& spec, EulerVariant variant);

// Classical RK4 on the continuous damped equation.
Trajectory integrate_rk4(const DampedOdeSpec& spec);

// max_i |e^{λT}x_i(T) − x0_i − ρ∫₀ᵀ e^{λt} f_i(x(t), t) dt|, trapezoid rule
// over the trajectory's own grid.
double verify_proposition1(const DampedOdeSpec& spec, const Trajectory& traj);

struct LimitGaps {
  double res_limit_gap = 0.0;     // λ = 1e-9 against x + f(x)
  double nonres_limit_gap = 0.0;  // λ = 1e6, ρ = λ+1, against f(x)
};

// One exponential step from x at both ends of the λ range. Only meaningful
// at dt = 1, which is enforced.
LimitGaps interpolation_limit_check(const std::function<State(const State&)>& f,
                                    const State& x, double dt);

enum class EulerVerdict { Decays, Diverges, Boundary };

std::string_view to_string(EulerVerdict v);

// Forward Euler on dx/dt = −λx from x0 = 1.
EulerVerdict euler_stability_probe(double lambda, double dt, std::size_t steps);

struct ConvergencePoint {
  double dt;
  double error;
};

struct ConvergenceStudy {
  std::vector<ConvergencePoint> points;
  double slope = 0.0;
};

using Integrator = std::function<Trajectory(const DampedOdeSpec&)>;

// Runs `scheme` at each step count and measures the ∞-norm terminal error
// against `reference`.
ConvergenceStudy convergence_study(const DampedOdeSpec& spec, const Integrator& scheme,
                                   std::span<const std::size_t> step_counts,
                                   const State& reference);

// Least-squares slope of log(error) against log(dt).
double loglog_slope(std::span<const ConvergencePoint> points);

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);
void write_convergence_csv(const ConvergenceStudy& study,
                           const std::filesystem::path& path);

}  // namespace donet::ode
