#pragma once

// Dense kernels behind the autodiff ops. Each kernel exists twice: a serial
// reference and an OpenMP version. Both compute every output element with
// the same summation order, so their results are bit-identical and the
// dispatching entry points may choose either.

#include <cstddef>
#include <span>

namespace donet::kernels {

struct MatDims {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
};

struct ConvDims {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t filters = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

namespace serial {

// c[m×n] = a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, MatDims d);
// c[m×k] = a[m×n] · b[k×n]ᵀ
void matmul_a_bt(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d);
// c[k×n] = a[m×k]ᵀ · b[m×n]
void matmul_at_b(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d);

void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<double> y, const ConvDims& d);
void conv2d_backward_input(std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx,
                           const ConvDims& d);
void conv2d_backward_weight(std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            const ConvDims& d);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, MatDims d);
void matmul_a_bt(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d);
void matmul_at_b(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d);

void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<double> y, const ConvDims& d);
void conv2d_backward_input(std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx,
                           const ConvDims& d);
void conv2d_backward_weight(std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            const ConvDims& d);

}  // namespace parallel

// Dispatch: parallel for large problems outside an enclosing parallel
// region, serial otherwise.
void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, MatDims d);
void matmul_a_bt(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d);
void matmul_at_b(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d);
void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<double> y, const ConvDims& d);
void conv2d_backward_input(std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx,
                           const ConvDims& d);
void conv2d_backward_weight(std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            const ConvDims& d);

// Caps the OpenMP worker count; 0 restores the runtime default.
void set_max_threads(int threads);
int max_threads();

}  // namespace donet::kernels
