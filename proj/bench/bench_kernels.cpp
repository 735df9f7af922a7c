// Serial reference vs OpenMP kernels. Run with --benchmark_filter to narrow.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "donet/kernels.hpp"

namespace {

using namespace donet::kernels;

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <auto Kernel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const MatDims d{n, n, n};
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, d);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

ConvDims conv_dims(std::size_t batch) { return {batch, 16, 28, 28, 16, 3, 1, 1}; }

template <auto Kernel>
void BM_conv_forward(benchmark::State& state) {
  const ConvDims d = conv_dims(static_cast<std::size_t>(state.range(0)));
  const auto x = filled(d.batch * d.channels * d.height * d.width, 3);
  const auto w = filled(d.filters * d.channels * d.kernel * d.kernel, 4);
  std::vector<double> y(d.batch * d.filters * d.out_height() * d.out_width());
  for (auto _ : state) {
    Kernel(x, w, y, d);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Kernel>
void BM_conv_backward_weight(benchmark::State& state) {
  const ConvDims d = conv_dims(static_cast<std::size_t>(state.range(0)));
  const auto x = filled(d.batch * d.channels * d.height * d.width, 5);
  const auto gy = filled(d.batch * d.filters * d.out_height() * d.out_width(), 6);
  std::vector<double> gw(d.filters * d.channels * d.kernel * d.kernel);
  for (auto _ : state) {
    Kernel(x, gy, gw, d);
    benchmark::DoNotOptimize(gw.data());
  }
}

BENCHMARK(BM_matmul<serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_conv_forward<serial::conv2d_forward>)->Name("conv_forward/serial")->Arg(8);
BENCHMARK(BM_conv_forward<parallel::conv2d_forward>)->Name("conv_forward/parallel")->Arg(8)->UseRealTime();
BENCHMARK(BM_conv_backward_weight<serial::conv2d_backward_weight>)
    ->Name("conv_backward_weight/serial")
    ->Arg(8);
BENCHMARK(BM_conv_backward_weight<parallel::conv2d_backward_weight>)
    ->Name("conv_backward_weight/parallel")
    ->Arg(8)
    ->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
