#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "donet/linalg.hpp"
#include "../support/spectra.hpp"

namespace donet::linalg {
namespace {

using testing::eigen_spectrum;
using testing::multiset_distance;
using testing::random_matrix;

TEST(Eigenvalues, Diagonal) {
  const auto v = eigenvalues(Matrix{{3, 0, 0}, {0, -1, 0}, {0, 0, 0}});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], Complex(-1, 0));
  EXPECT_EQ(v[1], Complex(0, 0));
  EXPECT_EQ(v[2], Complex(3, 0));
}

TEST(Eigenvalues, Rotation) {
  const auto v = eigenvalues(Matrix{{0, -1}, {1, 0}});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NEAR(std::abs(v[0] - Complex(0, -1)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(v[1] - Complex(0, 1)), 0.0, 1e-14);
}

TEST(Eigenvalues, CompanionOfFactoredCubic) {
  const std::vector<double> c{-6, 11, -6};
  const auto v = eigenvalues(companion(c));
  ASSERT_EQ(v.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(v[k].real(), k + 1.0, 1e-8);
    EXPECT_EQ(v[k].imag(), 0.0);
  }
}

TEST(Eigenvalues, CompanionRootsOfRandomPolynomials) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    // Distinct real roots r_k, expanded into monic coefficients.
    std::vector<double> roots(2 + trial % 5);
    for (std::size_t k = 0; k < roots.size(); ++k) roots[k] = static_cast<double>(k) + 0.3 * u(rng);
    std::vector<double> poly{1.0};
    for (double r : roots) {
      std::vector<double> next(poly.size() + 1, 0.0);
      for (std::size_t k = 0; k < poly.size(); ++k) {
        next[k + 1] += poly[k];
        next[k] -= r * poly[k];
      }
      poly = next;
    }
    poly.pop_back();
    std::vector<Complex> expect(roots.begin(), roots.end());
    EXPECT_LT(multiset_distance(eigenvalues(companion(poly)), expect), 1e-8);
  }
}

TEST(Eigenvalues, AgreeWithEigenOnRandomMatrices) {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 13u, 16u, 32u, 64u, 128u}) {
    for (int trial = 0; trial < (n > 32 ? 2 : 10); ++trial) {
      const Matrix m = random_matrix(n, rng);
      const auto ours = eigenvalues(m);
      ASSERT_EQ(ours.size(), n);
      EXPECT_LT(multiset_distance(ours, eigen_spectrum(m)), 1e-8 * std::max(1.0, norm_inf(m)))
          << "n=" << n;
      for (std::size_t k = 1; k < n; ++k) {
        const bool ordered = ours[k - 1].real() < ours[k].real() ||
                             (ours[k - 1].real() == ours[k].real() &&
                              ours[k - 1].imag() <= ours[k].imag());
        EXPECT_TRUE(ordered);
      }
    }
  }
}

TEST(Eigenvalues, ComplexPairsAreConjugate) {
  std::mt19937_64 rng(9);
  const Matrix m = random_matrix(12, rng);
  const auto v = eigenvalues(m);
  std::vector<Complex> conj;
  for (const auto& z : v) conj.push_back(std::conj(z));
  EXPECT_LT(multiset_distance(v, conj), 1e-10);
  for (const auto& z : v) {
    if (std::abs(z.imag()) < 1e-12) {
      EXPECT_EQ(z.imag(), 0.0);
    }
  }
}

TEST(Eigenvalues, DefectiveAndTriangular) {
  EXPECT_LT(multiset_distance(eigenvalues(Matrix{{2, 1}, {0, 2}}), {{2, 0}, {2, 0}}), 1e-7);
  EXPECT_LT(multiset_distance(eigenvalues(Matrix{{1, 5, 7}, {0, -2, 3}, {0, 0, 4}}),
                              {{1, 0}, {-2, 0}, {4, 0}}),
            1e-10);
  EXPECT_THROW(eigenvalues(Matrix(2, 3)), std::invalid_argument);
}

TEST(Lu, SolvesAgainstEigen) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {1u, 4u, 10u}) {
    const Matrix a = random_matrix(n, rng);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<double>(i) - 1.5;
    const auto lu = lu_factor(a);
    ASSERT_FALSE(lu.singular);
    const auto x = lu_solve(lu, b);
    const Eigen::VectorXd ref =
        testing::to_eigen(a).partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), n));
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(x[i], ref[i], 1e-10);
  }
}

TEST(Lu, SingularAndConditioning) {
  EXPECT_TRUE(lu_factor(Matrix{{1, 2}, {2, 4}}).singular);
  EXPECT_TRUE(std::isinf(condition_estimate(Matrix{{1, 2}, {2, 4}})));
  EXPECT_DOUBLE_EQ(condition_estimate(Matrix::identity(4)), 1.0);
  // diag(1, 1e-3): ‖A‖₁‖A⁻¹‖₁ = 1e3.
  EXPECT_NEAR(condition_estimate(Matrix{{1, 0}, {0, 1e-3}}), 1e3, 1e-9);
}

TEST(MatrixOps, ProductsNormsAndCompanionLayout) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(a * Matrix::identity(2), a);
  EXPECT_EQ((a * Matrix{{0, 1}, {1, 0}}), (Matrix{{2, 1}, {4, 3}}));
  const std::vector<double> x{1, -1};
  EXPECT_EQ(a * std::span<const double>(x), (std::vector<double>{-1, -1}));
  EXPECT_EQ(combine(2.0, a, -1.0, Matrix::identity(2)), (Matrix{{1, 4}, {6, 7}}));
  EXPECT_EQ(norm_inf(a), 7.0);
  EXPECT_EQ(norm_one(a), 6.0);
  const std::vector<double> c{-6, 11, -6};
  EXPECT_EQ(companion(c), (Matrix{{0, 0, 6}, {1, 0, -11}, {0, 1, 6}}));
  EXPECT_THROW(a * Matrix(3, 3), std::invalid_argument);
}

}  // namespace
}  // namespace donet::linalg
