// Serial reference kernels against their OpenMP counterparts.
//
//   ./build/bench/posereg_bench --benchmark_filter=conv
//   OMP_NUM_THREADS=4 ./build/bench/posereg_bench

#include <benchmark/benchmark.h>

#include <vector>

#include "posereg/kernels.hpp"
#include "posereg/rng.hpp"

using namespace posereg;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// The first two convolutions of the default trunk on a 56x56 crop.
kernels::ConvDims conv_case(std::int64_t which) {
  if (which == 0) return {3, 56, 56, 16, 7, 7, 2, 3};
  return {16, 13, 13, 32, 3, 3, 1, 1};
}

template <bool Parallel>
void BM_conv_forward(benchmark::State& state) {
  const auto d = conv_case(state.range(0));
  const auto in = filled(d.in_channels * d.in_h * d.in_w, 1);
  const auto w = filled(d.out_channels * d.in_channels * d.kernel_h * d.kernel_w, 2);
  const auto b = filled(d.out_channels, 3);
  std::vector<double> out(d.out_channels * d.out_h() * d.out_w());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::conv2d_forward(d, in, w, b, out);
    } else {
      kernels::serial::conv2d_forward(d, in, w, b, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& state) {
  const auto d = conv_case(state.range(0));
  const auto in = filled(d.in_channels * d.in_h * d.in_w, 1);
  const auto w = filled(d.out_channels * d.in_channels * d.kernel_h * d.kernel_w, 2);
  const auto g = filled(d.out_channels * d.out_h() * d.out_w(), 4);
  std::vector<double> gi(in.size()), gw(w.size()), gb(d.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::conv2d_backward_input(d, g, w, gi);
      kernels::parallel::conv2d_backward_params(d, g, in, gw, gb);
    } else {
      kernels::serial::conv2d_backward_input(d, g, w, gi);
      kernels::serial::conv2d_backward_params(d, g, in, gw, gb);
    }
    benchmark::DoNotOptimize(gi.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_max_pool(benchmark::State& state) {
  const kernels::PoolDims d{16, 28, 28, 3, 2};
  const auto in = filled(d.channels * d.in_h * d.in_w, 5);
  std::vector<double> out(d.channels * d.out_h() * d.out_w());
  std::vector<std::size_t> arg(out.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::max_pool_forward(d, in, out, arg);
    } else {
      kernels::serial::max_pool_forward(d, in, out, arg);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_linear(benchmark::State& state) {
  const std::size_t rows = 128, cols = 1024;
  const auto in = filled(cols, 6), w = filled(rows * cols, 7), b = filled(rows, 8);
  std::vector<double> out(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::linear_forward(rows, cols, in, w, b, out);
    } else {
      kernels::serial::linear_forward(rows, cols, in, w, b, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/serial")->Arg(0)->Arg(1);
BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/serial")->Arg(0)->Arg(1);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_max_pool<false>)->Name("max_pool/serial");
BENCHMARK(BM_max_pool<true>)->Name("max_pool/parallel");
BENCHMARK(BM_linear<false>)->Name("linear/serial");
BENCHMARK(BM_linear<true>)->Name("linear/parallel");

BENCHMARK_MAIN();
