#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <limits>
#include <random>
#include <vector>

#include "donet/linalg.hpp"

namespace donet::testing {

inline Eigen::MatrixXd to_eigen(const linalg::Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  }
  return e;
}

inline std::vector<std::complex<double>> eigen_spectrum(const linalg::Matrix& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(to_eigen(m), false);
  const auto v = es.eigenvalues();
  return {v.data(), v.data() + v.size()};
}

// Greedy nearest matching; max distance over matched pairs. Infinite when the
// sizes differ.
inline double multiset_distance(std::vector<std::complex<double>> a,
                                std::vector<std::complex<double>> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (const auto& z : a) {
    auto best = b.begin();
    for (auto it = b.begin(); it != b.end(); ++it) {
      if (std::abs(*it - z) < std::abs(*best - z)) best = it;
    }
    worst = std::max(worst, std::abs(*best - z));
    b.erase(best);
  }
  return worst;
}

inline linalg::Matrix random_matrix(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  linalg::Matrix m(n, n);
  for (double& v : m.data()) v = d(rng);
  return m;
}

}  // namespace donet::testing
