#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace donet::linalg {

using Complex = std::complex<double>;

// Dense row-major real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
std::vector<double> operator*(const Matrix& a, std::span<const double> x);
// a·s + b·t elementwise.
Matrix combine(double s, const Matrix& a, double t, const Matrix& b);
double norm_inf(const Matrix& a);
double norm_one(const Matrix& a);

struct LuFactors {
  Matrix lu;
  std::vector<std::size_t> pivot;
  bool singular = false;
};

// Partial pivoting. `singular` is set when a pivot is exactly zero.
LuFactors lu_factor(Matrix a);
std::vector<double> lu_solve(const LuFactors& f, std::span<const double> b);
// ‖A‖₁·‖A⁻¹‖₁; infinite for an exactly singular A.
double condition_estimate(const Matrix& a);

// Eigenvalues of a square real matrix, sorted by (Re, Im). Real eigenvalues
// carry an imaginary part of exactly zero. Throws std::runtime_error when the
// QR iteration exceeds 30·n² sweeps.
std::vector<Complex> eigenvalues(const Matrix& a);

void sort_spectrum(std::vector<Complex>& values);

// Frobenius companion matrix of the monic polynomial
// zⁿ + c[n−1]·zⁿ⁻¹ + … + c[0]; `coeffs` lists c[0] … c[n−1].
Matrix companion(std::span<const double> coeffs);

}  // namespace donet::linalg
