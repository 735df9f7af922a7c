#include "donet/kernels.hpp"

#include <algorithm>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace donet::kernels {

namespace {

constexpr std::size_t kParallelWork = std::size_t{1} << 15;

bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelWork && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

// The row/plane bodies below are shared by both variants; only the outer loop
// differs, which keeps the per-element arithmetic identical.

inline void matmul_row(const double* a, const double* b, double* c,
                       std::size_t i, const MatDims& d) {
  double* crow = c + i * d.n;
  std::fill(crow, crow + d.n, 0.0);
  const double* arow = a + i * d.k;
  for (std::size_t p = 0; p < d.k; ++p) {
    const double aip = arow[p];
    const double* brow = b + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) crow[j] += aip * brow[j];
  }
}

inline void matmul_a_bt_row(const double* a, const double* b, double* c,
                            std::size_t i, const MatDims& d) {
  const double* arow = a + i * d.n;
  for (std::size_t p = 0; p < d.k; ++p) {
    const double* brow = b + p * d.n;
    double acc = 0.0;
    for (std::size_t j = 0; j < d.n; ++j) acc += arow[j] * brow[j];
    c[i * d.k + p] = acc;
  }
}

inline void matmul_at_b_row(const double* a, const double* b, double* c,
                            std::size_t p, const MatDims& d) {
  double* crow = c + p * d.n;
  std::fill(crow, crow + d.n, 0.0);
  for (std::size_t i = 0; i < d.m; ++i) {
    const double aip = a[i * d.k + p];
    const double* brow = b + i * d.n;
    for (std::size_t j = 0; j < d.n; ++j) crow[j] += aip * brow[j];
  }
}

// One (sample, filter) output plane.
inline void conv_forward_plane(const double* x, const double* w, double* y,
                               std::size_t n, std::size_t f,
                               const ConvDims& d) {
  const std::size_t oh_n = d.out_height();
  const std::size_t ow_n = d.out_width();
  const std::size_t k = d.kernel;
  double* yplane = y + (n * d.filters + f) * oh_n * ow_n;
  for (std::size_t oh = 0; oh < oh_n; ++oh) {
    for (std::size_t ow = 0; ow < ow_n; ++ow) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d.channels; ++c) {
        const double* xplane = x + (n * d.channels + c) * d.height * d.width;
        const double* wk = w + (f * d.channels + c) * k * k;
        for (std::size_t kh = 0; kh < k; ++kh) {
          const auto ih = static_cast<std::int64_t>(oh * d.stride + kh) -
                          static_cast<std::int64_t>(d.pad);
          if (ih < 0 || ih >= static_cast<std::int64_t>(d.height)) continue;
          for (std::size_t kw = 0; kw < k; ++kw) {
            const auto iw = static_cast<std::int64_t>(ow * d.stride + kw) -
                            static_cast<std::int64_t>(d.pad);
            if (iw < 0 || iw >= static_cast<std::int64_t>(d.width)) continue;
            acc += xplane[ih * d.width + iw] * wk[kh * k + kw];
          }
        }
      }
      yplane[oh * ow_n + ow] = acc;
    }
  }
}

// One (sample, channel) input-gradient plane, gathered.
inline void conv_backward_input_plane(const double* gy, const double* w,
                                      double* gx, std::size_t n,
                                      std::size_t c, const ConvDims& d) {
  const auto oh_n = static_cast<std::int64_t>(d.out_height());
  const auto ow_n = static_cast<std::int64_t>(d.out_width());
  const std::size_t k = d.kernel;
  const auto stride = static_cast<std::int64_t>(d.stride);
  const auto pad = static_cast<std::int64_t>(d.pad);
  double* gplane = gx + (n * d.channels + c) * d.height * d.width;
  for (std::size_t ih = 0; ih < d.height; ++ih) {
    for (std::size_t iw = 0; iw < d.width; ++iw) {
      double acc = 0.0;
      for (std::size_t f = 0; f < d.filters; ++f) {
        const double* gyplane = gy + (n * d.filters + f) * oh_n * ow_n;
        const double* wk = w + (f * d.channels + c) * k * k;
        for (std::size_t kh = 0; kh < k; ++kh) {
          const std::int64_t num_h = static_cast<std::int64_t>(ih) + pad -
                                     static_cast<std::int64_t>(kh);
          if (num_h < 0 || num_h % stride != 0) continue;
          const std::int64_t oh = num_h / stride;
          if (oh >= oh_n) continue;
          for (std::size_t kw = 0; kw < k; ++kw) {
            const std::int64_t num_w = static_cast<std::int64_t>(iw) + pad -
                                       static_cast<std::int64_t>(kw);
            if (num_w < 0 || num_w % stride != 0) continue;
            const std::int64_t ow = num_w / stride;
            if (ow >= ow_n) continue;
            acc += gyplane[oh * ow_n + ow] * wk[kh * k + kw];
          }
        }
      }
      gplane[ih * d.width + iw] = acc;
    }
  }
}

// One (filter, channel) kernel gradient.
inline void conv_backward_weight_kernel(const double* x, const double* gy,
                                        double* gw, std::size_t f,
                                        std::size_t c, const ConvDims& d) {
  const std::size_t oh_n = d.out_height();
  const std::size_t ow_n = d.out_width();
  const std::size_t k = d.kernel;
  double* gk = gw + (f * d.channels + c) * k * k;
  for (std::size_t kh = 0; kh < k; ++kh) {
    for (std::size_t kw = 0; kw < k; ++kw) {
      double acc = 0.0;
      for (std::size_t n = 0; n < d.batch; ++n) {
        const double* xplane = x + (n * d.channels + c) * d.height * d.width;
        const double* gyplane = gy + (n * d.filters + f) * oh_n * ow_n;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const auto ih = static_cast<std::int64_t>(oh * d.stride + kh) -
                          static_cast<std::int64_t>(d.pad);
          if (ih < 0 || ih >= static_cast<std::int64_t>(d.height)) continue;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const auto iw = static_cast<std::int64_t>(ow * d.stride + kw) -
                            static_cast<std::int64_t>(d.pad);
            if (iw < 0 || iw >= static_cast<std::int64_t>(d.width)) continue;
            acc += gyplane[oh * ow_n + ow] * xplane[ih * d.width + iw];
          }
        }
      }
      gk[kh * k + kw] = acc;
    }
  }
}

std::size_t conv_work(const ConvDims& d) {
  return d.batch * d.filters * d.channels * d.out_height() * d.out_width() *
         d.kernel * d.kernel;
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, MatDims d) {
  for (std::size_t i = 0; i < d.m; ++i) matmul_row(a.data(), b.data(), c.data(), i, d);
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d) {
  for (std::size_t i = 0; i < d.m; ++i) matmul_a_bt_row(a.data(), b.data(), c.data(), i, d);
}

void matmul_at_b(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d) {
  for (std::size_t p = 0; p < d.k; ++p) matmul_at_b_row(a.data(), b.data(), c.data(), p, d);
}

void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<double> y, const ConvDims& d) {
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t f = 0; f < d.filters; ++f)
      conv_forward_plane(x.data(), w.data(), y.data(), n, f, d);
}

void conv2d_backward_input(std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx,
                           const ConvDims& d) {
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t c = 0; c < d.channels; ++c)
      conv_backward_input_plane(gy.data(), w.data(), gx.data(), n, c, d);
}

void conv2d_backward_weight(std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            const ConvDims& d) {
  for (std::size_t f = 0; f < d.filters; ++f)
    for (std::size_t c = 0; c < d.channels; ++c)
      conv_backward_weight_kernel(x.data(), gy.data(), gw.data(), f, c, d);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, MatDims d) {
  const auto rows = static_cast<std::int64_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    matmul_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), d);
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d) {
  const auto rows = static_cast<std::int64_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    matmul_a_bt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), d);
}

void matmul_at_b(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d) {
  const auto rows = static_cast<std::int64_t>(d.k);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < rows; ++p)
    matmul_at_b_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(p), d);
}

void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<double> y, const ConvDims& d) {
  const auto planes = static_cast<std::int64_t>(d.batch * d.filters);
#pragma omp parallel for schedule(static)
  for (std::int64_t q = 0; q < planes; ++q) {
    const auto uq = static_cast<std::size_t>(q);
    conv_forward_plane(x.data(), w.data(), y.data(), uq / d.filters,
                       uq % d.filters, d);
  }
}

void conv2d_backward_input(std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx,
                           const ConvDims& d) {
  const auto planes = static_cast<std::int64_t>(d.batch * d.channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t q = 0; q < planes; ++q) {
    const auto uq = static_cast<std::size_t>(q);
    conv_backward_input_plane(gy.data(), w.data(), gx.data(), uq / d.channels,
                              uq % d.channels, d);
  }
}

void conv2d_backward_weight(std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            const ConvDims& d) {
  const auto kernels = static_cast<std::int64_t>(d.filters * d.channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t q = 0; q < kernels; ++q) {
    const auto uq = static_cast<std::size_t>(q);
    conv_backward_weight_kernel(x.data(), gy.data(), gw.data(),
                                uq / d.channels, uq % d.channels, d);
  }
}

}  // namespace parallel

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, MatDims d) {
  if (use_parallel(d.m * d.k * d.n)) {
    parallel::matmul(a, b, c, d);
  } else {
    serial::matmul(a, b, c, d);
  }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d) {
  if (use_parallel(d.m * d.k * d.n)) {
    parallel::matmul_a_bt(a, b, c, d);
  } else {
    serial::matmul_a_bt(a, b, c, d);
  }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, MatDims d) {
  if (use_parallel(d.m * d.k * d.n)) {
    parallel::matmul_at_b(a, b, c, d);
  } else {
    serial::matmul_at_b(a, b, c, d);
  }
}

void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<double> y, const ConvDims& d) {
  if (use_parallel(conv_work(d))) {
    parallel::conv2d_forward(x, w, y, d);
  } else {
    serial::conv2d_forward(x, w, y, d);
  }
}

void conv2d_backward_input(std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx,
                           const ConvDims& d) {
  if (use_parallel(conv_work(d))) {
    parallel::conv2d_backward_input(gy, w, gx, d);
  } else {
    serial::conv2d_backward_input(gy, w, gx, d);
  }
}

void conv2d_backward_weight(std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            const ConvDims& d) {
  if (use_parallel(conv_work(d))) {
    parallel::conv2d_backward_weight(x, gy, gw, d);
  } else {
    serial::conv2d_backward_weight(x, gy, gw, d);
  }
}

void set_max_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) {
    omp_set_num_threads(threads);
  } else {
    omp_set_num_threads(omp_get_num_procs());
  }
#else
  (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace donet::kernels
