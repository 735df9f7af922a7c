#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "donet/ops.hpp"
#include "donet/stability.hpp"
#include "../support/spectra.hpp"

namespace donet::stability {
namespace {

using testing::eigen_spectrum;
using testing::multiset_distance;
using testing::random_matrix;

Tensor transposed(const Matrix& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t[j * a.rows() + i] = a(i, j);
  }
  return t;
}

Var times(Graph& g, const Matrix& a, Var x) {
  const std::size_t d = a.cols();
  return reshape(matmul(reshape(x, {1, d}), g.constant(transposed(a))), {a.rows()});
}

// f(x) = A·x + (B·x) ⊙ (C·x)
DynamicsHandle quadratic_map(const Matrix& a, const Matrix& b, const Matrix& c) {
  DynamicsHandle h;
  h.dimension = a.rows();
  h.f = [=](const Vec& x) {
    const Vec ax = a * std::span<const double>(x);
    const Vec bx = b * std::span<const double>(x);
    const Vec cx = c * std::span<const double>(x);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = ax[i] + bx[i] * cx[i];
    return y;
  };
  h.tensor_f = [=](Graph& g, Var x) {
    return add(times(g, a, x), mul(times(g, b, x), times(g, c, x)));
  };
  return h;
}

double sup_norm(const Vec& v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

TEST(Equilibrium, NegIdentityFromAnyStart) {
  const DynamicsHandle f = dynamics_by_id("neg_identity:3");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = find_equilibrium(f, {u(rng), u(rng), u(rng)});
    EXPECT_LT(sup_norm(x), 1e-10);
  }
}

TEST(Equilibrium, ScalarQuadratic) {
  const Vec x = find_equilibrium(dynamics_by_id("quadratic"), {3.0});
  EXPECT_NEAR(x[0], 2.0, 1e-10);
}

TEST(Equilibrium, CubicAgreesWithGridSearch) {
  const DynamicsHandle f = dynamics_by_id("cubic");
  const Vec newton = find_equilibrium(f, {0.8, -0.6});
  EXPECT_LT(sup_norm(f(newton)), 1e-10);

  // Coarse grid, then a fine grid around the best cell.
  auto grid_best = [&](double cx, double cy, double half, double step) {
    Vec best{cx, cy};
    double best_r = sup_norm(f(best));
    for (double x = cx - half; x <= cx + half; x += step) {
      for (double y = cy - half; y <= cy + half; y += step) {
        const double r = sup_norm(f({x, y}));
        if (r < best_r) {
          best_r = r;
          best = {x, y};
        }
      }
    }
    return best;
  };
  Vec g = grid_best(0.0, 0.0, 2.0, 0.02);
  g = grid_best(g[0], g[1], 0.04, 2e-4);
  EXPECT_LT(std::abs(g[0] - newton[0]), 1e-3);
  EXPECT_LT(std::abs(g[1] - newton[1]), 1e-3);
  const Vec polished = find_equilibrium(f, g);
  EXPECT_LT(std::abs(polished[0] - newton[0]), 1e-9);
  EXPECT_LT(std::abs(polished[1] - newton[1]), 1e-9);
}

TEST(Equilibrium, SingularStepReportsCondition) {
  DynamicsHandle h;
  h.dimension = 2;
  h.f = [](const Vec& x) { return Vec{x[0] + x[1] - 1.0, 2.0 * x[0] + 2.0 * x[1] - 3.0}; };
  try {
    find_equilibrium(h, {0.0, 0.0});
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("condition estimate"), std::string::npos) << e.what();
  }
}

TEST(Equilibrium, NonConvergence) {
  DynamicsHandle h;
  h.dimension = 1;
  h.f = [](const Vec& x) { return Vec{x[0] * x[0] * x[0]}; };
  NewtonOptions opt;
  opt.max_iterations = 5;
  try {
    find_equilibrium(h, {1.0}, opt);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("did not converge"), std::string::npos) << e.what();
  }
}

TEST(Jacobian, LinearIsExactOnAutodiffPath) {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(4, rng);
  const DynamicsHandle f = linear_dynamics(a);
  const Matrix j = jacobian(f, {0.3, -1.0, 2.0, 0.5});
  EXPECT_EQ(j, a);
}

TEST(Jacobian, HandDerivative) {
  // f = (x₀², x₀x₁): B picks x₀ twice, C is the identity.
  const Matrix zero(2, 2);
  const DynamicsHandle f =
      quadratic_map(zero, Matrix{{1, 0}, {1, 0}}, Matrix::identity(2));
  const Matrix expect{{2, 0}, {2, 1}};
  EXPECT_EQ(jacobian_autodiff(f, {1.0, 2.0}), expect);
  const Matrix fd = jacobian_fd(f, {1.0, 2.0});
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(fd.data()[k], expect.data()[k], 1e-8);
}

TEST(Jacobian, AutodiffMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const DynamicsHandle f =
        quadratic_map(random_matrix(5, rng), random_matrix(5, rng), random_matrix(5, rng));
    std::normal_distribution<double> d(0.0, 1.0);
    Vec x(5);
    for (double& v : x) v = d(rng);
    const Matrix ad = jacobian_autodiff(f, x);
    const Matrix fd = jacobian_fd(f, x);
    for (std::size_t k = 0; k < 25; ++k) EXPECT_NEAR(ad.data()[k], fd.data()[k], 1e-6);
  }
}

TEST(Jacobian, NonFiniteEntriesRejected) {
  DynamicsHandle h;
  h.dimension = 1;
  h.f = [](const Vec& x) { return Vec{std::sqrt(x[0])}; };
  EXPECT_THROW(jacobian(h, {0.0}), std::runtime_error);
}

TEST(DampedSpectrum, ShiftIdentityForUnitRho) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix j = random_matrix(2 + trial % 7, rng);
    const auto raw = linalg::eigenvalues(j);
    for (double lambda : {0.0, 0.3, 0.8, 2.5}) {
      const auto damped = damped_spectrum(j, lambda, ode::RhoKind::One);
      ASSERT_EQ(damped.size(), raw.size());
      for (std::size_t k = 0; k < raw.size(); ++k) {
        EXPECT_LT(std::abs(damped[k] - (raw[k] - lambda)), 1e-9);
      }
      EXPECT_NEAR(max_real(damped), max_real(raw) - lambda, 1e-9);
    }
  }
}

TEST(DampedSpectrum, ZeroLambdaIsRaw) {
  std::mt19937_64 rng(7);
  const Matrix j = random_matrix(6, rng);
  const auto raw = linalg::eigenvalues(j);
  EXPECT_EQ(damped_spectrum(j, 0.0, ode::RhoKind::One), raw);
  EXPECT_EQ(damped_spectrum(j, 0.0, ode::RhoKind::LambdaPlusOne), raw);
  EXPECT_THROW(damped_spectrum(j, -0.1, ode::RhoKind::One), std::invalid_argument);
}

TEST(DampedSpectrum, MultisetEqualsDirectEigensolve) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix j = random_matrix(dim(rng), rng);
    for (double lambda : {0.0, 0.3, 0.8}) {
      for (ode::RhoKind k : {ode::RhoKind::One, ode::RhoKind::LambdaPlusOne}) {
        const double r = ode::rho(k, lambda);
        const Matrix direct = linalg::combine(r, j, -lambda, Matrix::identity(j.rows()));
        const auto shifted = damped_spectrum(j, lambda, k);
        EXPECT_LT(multiset_distance(shifted, linalg::eigenvalues(direct)), 1e-8);
        EXPECT_LT(multiset_distance(shifted, eigen_spectrum(direct)), 1e-8);
      }
    }
  }
}

TEST(Frontier, Examples) {
  Frontier a = rho_stability_frontier({-1.0, 0.0}, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(a.bound, 0.5);
  EXPECT_FALSE(a.rho_below_bound);
  EXPECT_TRUE(a.satisfied);

  Frontier b = rho_stability_frontier({2.0, 0.0}, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(b.bound, 1.5);
  EXPECT_TRUE(b.rho_below_bound);
  EXPECT_TRUE(b.satisfied);

  Frontier c = rho_stability_frontier({1.0, 0.0}, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(c.bound, 1.0);
  EXPECT_FALSE(c.satisfied);

  EXPECT_THROW(rho_stability_frontier({0.0, 3.0}, 0.5, 1.0), std::invalid_argument);
}

TEST(Frontier, BoundFormAgreesForPositiveRealPart) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Complex nu(u(rng), u(rng) - 1.5);
    const double lambda = u(rng);
    const double r = u(rng);
    const Frontier f = rho_stability_frontier(nu, lambda, r);
    EXPECT_EQ(f.satisfied, r * nu.real() - lambda < nu.real());
    EXPECT_EQ(f.rho_below_bound, f.satisfied);
    // With Re(ν) < 0 dividing through flips the inequality.
    const Frontier g = rho_stability_frontier(-nu, lambda, r);
    EXPECT_EQ(g.satisfied, -r * nu.real() - lambda < -nu.real());
  }
}

TEST(Report, InvariantsAndMonotoneStabilization) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix j = random_matrix(1 + trial % 8, rng);
    bool was_stable = false;
    for (double lambda = 0.0; lambda <= 5.0; lambda += 0.05) {
      const StabilityReport r = analyze_jacobian({}, j, lambda, ode::RhoKind::One);
      ASSERT_EQ(r.raw_spectrum.size(), j.rows());
      ASSERT_EQ(r.damped_spectrum.size(), j.rows());
      EXPECT_EQ(r.stable_raw, r.max_re_raw < 0.0);
      EXPECT_EQ(r.stable_damped, r.max_re_damped < 0.0);
      EXPECT_NEAR(r.max_re_damped, r.max_re_raw - lambda, 1e-9);
      if (was_stable) {
        EXPECT_TRUE(r.stable_damped) << "lambda=" << lambda;
      }
      was_stable = r.stable_damped;
    }
  }
}

TEST(Report, LinearContractionMatchesVerdict) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> d(0.0, 1.0);
  std::uniform_real_distribution<double> target(0.2, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 2 + trial % 3;
    Matrix a = random_matrix(n, rng, 0.5);
    // Shift so the spectral abscissa is ±target, away from the imaginary axis.
    const double want = (trial % 2 == 0 ? -1.0 : 1.0) * target(rng);
    const double shift = max_real(linalg::eigenvalues(a)) - want;
    a = linalg::combine(1.0, a, -shift, Matrix::identity(n));
    const StabilityReport rep = analyze(linear_dynamics(a), Vec(n, 0.3), 0.0, ode::RhoKind::One);
    ASSERT_NEAR(rep.max_re_raw, want, 1e-9);

    const double T = 50.0 / std::abs(rep.max_re_raw);
    int contracted = 0;
    for (int p = 0; p < 100; ++p) {
      ode::DampedOdeSpec s;
      s.lambda = 0.0;
      s.f = [&a](const ode::State& x, double) { return a * std::span<const double>(x); };
      s.x0.resize(n);
      for (double& v : s.x0) v = 1e-3 * d(rng);
      s.T = T;
      s.steps = static_cast<std::size_t>(std::ceil(T / 0.02));
      const auto end = ode::integrate_rk4(s).back();
      double n0 = 0.0, n1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        n0 += s.x0[i] * s.x0[i];
        n1 += end[i] * end[i];
      }
      if (n1 < n0) ++contracted;
    }
    EXPECT_EQ(contracted, rep.stable_raw ? 100 : 0) << "trial " << trial;
  }
}

TEST(Report, JsonUsesPairs) {
  const StabilityReport r = analyze_jacobian({0.0, 0.0}, Matrix{{0, -1}, {1, 0}}, 0.5,
                                             ode::RhoKind::One);
  const nlohmann::json j = to_json(r);
  ASSERT_EQ(j["raw_spectrum"].size(), 2u);
  EXPECT_EQ(j["raw_spectrum"][0].size(), 2u);
  EXPECT_DOUBLE_EQ(j["damped_spectrum"][1][0].get<double>(), -0.5);
  EXPECT_DOUBLE_EQ(j["damped_spectrum"][1][1].get<double>(), 1.0);
  EXPECT_FALSE(j["stable_raw"].get<bool>());
  EXPECT_TRUE(j["stable_damped"].get<bool>());
  EXPECT_EQ(j["rho"], "one");
}

TEST(Report, CompanionExample) {
  const StabilityReport r = analyze_jacobian(
      {}, parse_matrix("companion:z^3-6z^2+11z-6"), 0.5, ode::RhoKind::One);
  const std::vector<Complex> expect{{0.5, 0}, {1.5, 0}, {2.5, 0}};
  EXPECT_LT(multiset_distance(r.damped_spectrum, expect), 1e-8);
}

TEST(Parsing, Polynomials) {
  EXPECT_EQ(parse_polynomial("z^3-6z^2+11z-6"), (std::vector<double>{-6, 11, -6}));
  EXPECT_EQ(parse_polynomial("2z^2 - 2"), (std::vector<double>{-1, 0}));
  EXPECT_EQ(parse_polynomial("x+1"), (std::vector<double>{1}));
  EXPECT_EQ(parse_polynomial("-6+z^2+1*z"), (std::vector<double>{-6, 1}));
  for (const char* bad : {"", "5", "z^", "z^^2", "3z z", "q+1"}) {
    EXPECT_THROW(parse_polynomial(bad), std::invalid_argument) << bad;
  }
}

TEST(Parsing, Matrices) {
  EXPECT_EQ(parse_matrix("diag:3,-1,0"), (Matrix{{3, 0, 0}, {0, -1, 0}, {0, 0, 0}}));
  EXPECT_EQ(parse_matrix("rows:1,2;3,4"), (Matrix{{1, 2}, {3, 4}}));
  EXPECT_THROW(parse_matrix("rows:1,2;3"), std::invalid_argument);
  EXPECT_THROW(parse_matrix("rows:1,2"), std::invalid_argument);
  EXPECT_THROW(parse_matrix("eye:3"), std::invalid_argument);
  EXPECT_THROW(parse_matrix("diag:1,x"), std::invalid_argument);
  EXPECT_THROW(dynamics_by_id("lorenz"), std::invalid_argument);
  EXPECT_EQ(dynamics_by_id("linear:0,1;-1,0")({1.0, 2.0}), (Vec{2.0, -1.0}));
}

}  // namespace
}  // namespace donet::stability
