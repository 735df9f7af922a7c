#include "donet/ode.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>

namespace donet::ode {

double rho(RhoKind kind, double lambda) {
  return kind == RhoKind::One ? 1.0 : lambda + 1.0;
}

std::string_view to_string(RhoKind kind) {
  return kind == RhoKind::One ? "one" : "lambda_plus_one";
}

RhoKind parse_rho_kind(std::string_view name) {
  if (name == "one" || name == "1") return RhoKind::One;
  if (name == "lambda_plus_one" || name == "lambda+1") return RhoKind::LambdaPlusOne;
  throw std::invalid_argument("unknown rho '" + std::string(name) +
                              "' (expected one or lambda_plus_one)");
}

void DampedOdeSpec::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(T > 0.0)) throw std::invalid_argument("horizon T must be > 0");
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  if (!f) throw std::invalid_argument("dynamics callable is empty");
  if (x0.empty()) throw std::invalid_argument("initial state is empty");
}

double exp_weight(double lambda, double dt) {
  const double h = lambda * dt;
  if (h < kSeriesThreshold) {
    return dt * (1.0 - h / 2.0 + h * h / 6.0 - h * h * h / 24.0);
  }
  return -std::expm1(-h) / lambda;
}

namespace {

State eval_checked(const DampedOdeSpec& spec, const State& x, double t,
                   std::size_t step) {
  State fx = spec.f(x, t);
  if (fx.size() != x.size()) {
    throw std::runtime_error("dynamics changed dimension at step " +
                             std::to_string(step));
  }
  for (double v : fx) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("dynamics returned a non-finite value at step " +
                               std::to_string(step));
    }
  }
  return fx;
}

template <typename Step>
Trajectory march(const DampedOdeSpec& spec, Step step) {
  spec.validate();
  const double dt = spec.dt();
  Trajectory traj;
  traj.times.reserve(spec.steps + 1);
  traj.states.reserve(spec.steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(spec.x0);
  for (std::size_t n = 0; n < spec.steps; ++n) {
    const double t = static_cast<double>(n) * dt;
    traj.states.push_back(step(traj.states.back(), t, n));
    traj.times.push_back(static_cast<double>(n + 1) * dt);
  }
  return traj;
}

}  // namespace

Trajectory integrate_exponential(const DampedOdeSpec& spec) {
  const double dt = spec.dt();
  const double decay = std::exp(-spec.lambda * dt);
  const double gain = exp_weight(spec.lambda, dt) * rho(spec.rho, spec.lambda);
  return march(spec, [&](const State& x, double t, std::size_t n) {
    const State fx = eval_checked(spec, x, t, n);
    State next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = decay * x[i] + gain * fx[i];
    return next;
  });
}

Trajectory integrate_damped_euler(const DampedOdeSpec& spec, EulerVariant variant) {
  const double dt = spec.dt();
  const double keep = 1.0 - spec.lambda * dt;
  const double gain = variant == EulerVariant::Net1 ? dt : 1.0 + spec.lambda * dt;
  return march(spec, [&](const State& x, double t, std::size_t n) {
    const State fx = eval_checked(spec, x, t, n);
    State next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = keep * x[i] + gain * fx[i];
    return next;
  });
}

Trajectory integrate_rk4(const DampedOdeSpec& spec) {
  const double dt = spec.dt();
  const double r = rho(spec.rho, spec.lambda);
  const double lam = spec.lambda;
  return march(spec, [&](const State& x, double t, std::size_t n) {
    const std::size_t d = x.size();
    auto rhs = [&](const State& y, double s) {
      State out = eval_checked(spec, y, s, n);
      for (std::size_t i = 0; i < d; ++i) out[i] = -lam * y[i] + r * out[i];
      return out;
    };
    auto axpy = [d](const State& y, double a, const State& k) {
      State out(d);
      for (std::size_t i = 0; i < d; ++i) out[i] = y[i] + a * k[i];
      return out;
    };
    const State k1 = rhs(x, t);
    const State k2 = rhs(axpy(x, dt / 2, k1), t + dt / 2);
    const State k3 = rhs(axpy(x, dt / 2, k2), t + dt / 2);
    const State k4 = rhs(axpy(x, dt, k3), t + dt);
    State next(d);
    for (std::size_t i = 0; i < d; ++i) {
      next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return next;
  });
}

double verify_proposition1(const DampedOdeSpec& spec, const Trajectory& traj) {
  if (traj.states.empty() || traj.times.size() != traj.states.size()) {
    throw std::invalid_argument("malformed trajectory");
  }
  const std::size_t d = traj.states.front().size();
  const double lam = spec.lambda;
  State integral(d, 0.0);
  State prev = spec.f(traj.states[0], traj.times[0]);
  double prev_w = std::exp(lam * traj.times[0]);
  for (std::size_t n = 1; n < traj.states.size(); ++n) {
    const State cur = spec.f(traj.states[n], traj.times[n]);
    const double w = std::exp(lam * traj.times[n]);
    const double h = traj.times[n] - traj.times[n - 1];
    for (std::size_t i = 0; i < d; ++i) {
      integral[i] += 0.5 * h * (prev_w * prev[i] + w * cur[i]);
    }
    prev = cur;
    prev_w = w;
  }
  const double r = rho(spec.rho, lam);
  const double growth = std::exp(lam * traj.times.back());
  double worst = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double gap =
        growth * traj.back()[i] - traj.states.front()[i] - r * integral[i];
    worst = std::max(worst, std::abs(gap));
  }
  return worst;
}

LimitGaps interpolation_limit_check(const std::function<State(const State&)>& f,
                                    const State& x, double dt) {
  if (dt != 1.0) {
    throw std::invalid_argument(
        "interpolation limits coincide with the block equations only at dt = 1");
  }
  const State fx = f(x);
  if (fx.size() != x.size()) throw std::invalid_argument("f changed dimension");
  auto step = [&](double lambda, RhoKind kind) {
    const double decay = std::exp(-lambda * dt);
    const double gain = exp_weight(lambda, dt) * rho(kind, lambda);
    State out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = decay * x[i] + gain * fx[i];
    return out;
  };
  LimitGaps gaps;
  for (RhoKind kind : {RhoKind::One, RhoKind::LambdaPlusOne}) {
    const State small = step(1e-9, kind);
    for (std::size_t i = 0; i < x.size(); ++i) {
      gaps.res_limit_gap = std::max(gaps.res_limit_gap, std::abs(small[i] - (x[i] + fx[i])));
    }
  }
  const State large = step(1e6, RhoKind::LambdaPlusOne);
  for (std::size_t i = 0; i < x.size(); ++i) {
    gaps.nonres_limit_gap = std::max(gaps.nonres_limit_gap, std::abs(large[i] - fx[i]));
  }
  return gaps;
}

std::string_view to_string(EulerVerdict v) {
  switch (v) {
    case EulerVerdict::Decays: return "decays";
    case EulerVerdict::Diverges: return "diverges";
    case EulerVerdict::Boundary: return "boundary";
  }
  return "unknown";
}

EulerVerdict euler_stability_probe(double lambda, double dt, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("probe needs at least one step");
  const double factor = 1.0 - lambda * dt;
  double x = 1.0;
  for (std::size_t n = 0; n < steps; ++n) x = factor * x;
  const double tol = 1e-12 * static_cast<double>(steps);
  const double mag = std::abs(x);
  if (std::abs(mag - 1.0) <= tol) return EulerVerdict::Boundary;
  return mag < 1.0 ? EulerVerdict::Decays : EulerVerdict::Diverges;
}

double loglog_slope(std::span<const ConvergencePoint> points) {
  if (points.size() < 2) throw std::invalid_argument("slope needs two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : points) {
    if (!(p.dt > 0.0) || !(p.error > 0.0)) {
      throw std::invalid_argument("log-log slope needs positive dt and error");
    }
    const double lx = std::log(p.dt);
    const double ly = std::log(p.error);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(points.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ConvergenceStudy convergence_study(const DampedOdeSpec& spec, const Integrator& scheme,
                                   std::span<const std::size_t> step_counts,
                                   const State& reference) {
  ConvergenceStudy study;
  for (std::size_t n : step_counts) {
    DampedOdeSpec s = spec;
    s.steps = n;
    const Trajectory traj = scheme(s);
    double err = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      err = std::max(err, std::abs(traj.back()[i] - reference[i]));
    }
    study.points.push_back({s.dt(), err});
  }
  study.slope = loglog_slope(study.points);
  return study;
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::size_t d = traj.states.empty() ? 0 : traj.states.front().size();
  out << 't';
  for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
  out << '\n' << std::setprecision(17);
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    out << traj.times[n];
    for (double v : traj.states[n]) out << ',' << v;
    out << '\n';
  }
}

void write_convergence_csv(const ConvergenceStudy& study,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "dt,error\n" << std::setprecision(17);
  for (const auto& p : study.points) out << p.dt << ',' << p.error << '\n';
}

}  // namespace donet::ode
