// Parallel kernels against their serial reference loops.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "eqm/kernels.hpp"

namespace k = eqm::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Shapes of one training step: batch 256 through a 256-wide hidden layer,
// forward and the two backward products.
template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto kk = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const bool ta = state.range(3) & 1, tb = state.range(3) & 2;
  const auto a = random_values(m * kk, 1), b = random_values(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::matmul(a, b, c, m, kk, n, ta, tb);
    else k::reference::matmul(a, b, c, m, kk, n, ta, tb);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * kk * n));
}

void matmul_args(benchmark::internal::Benchmark* b) {
  b->Args({256, 256, 256, 0})->Args({256, 256, 256, 2})->Args({256, 256, 256, 1})->Args({256, 2, 256, 0})
      ->Args({1024, 128, 128, 0});
}

template <bool Parallel>
void BM_RbfKernelSum(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(2 * n, 3), b = random_values(2 * n, 4);
  const std::vector<double> h = {0.1, 0.5, 1.0, 2.0, 5.0};
  for (auto _ : state) {
    double s = Parallel ? k::rbf_kernel_sum(a, n, b, n, 2, h, false)
                        : k::reference::rbf_kernel_sum(a, n, b, n, 2, h, false);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <bool Parallel>
void BM_SquaredDistances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(2 * n, 5), b = random_values(2 * 20000, 6);
  std::vector<double> out(n * 20000);
  for (auto _ : state) {
    if constexpr (Parallel) k::squared_distances(a, n, b, 20000, 2, out);
    else k::reference::squared_distances(a, n, b, 20000, 2, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Sum(benchmark::State& state) {
  const auto v = random_values(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) {
    double s = Parallel ? k::sum(v) : k::reference::sum(v);
    benchmark::DoNotOptimize(s);
  }
  state.SetBytesProcessed(state.iterations() * state.range(0) * static_cast<std::int64_t>(sizeof(double)));
}

}  // namespace

BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Apply(matmul_args);
BENCHMARK(BM_Matmul<false>)->Name("matmul/reference")->Apply(matmul_args);
BENCHMARK(BM_RbfKernelSum<true>)->Name("rbf_kernel_sum/parallel")->Arg(500)->Arg(2000);
BENCHMARK(BM_RbfKernelSum<false>)->Name("rbf_kernel_sum/reference")->Arg(500)->Arg(2000);
BENCHMARK(BM_SquaredDistances<true>)->Name("squared_distances/parallel")->Arg(500);
BENCHMARK(BM_SquaredDistances<false>)->Name("squared_distances/reference")->Arg(500);
BENCHMARK(BM_Sum<true>)->Name("sum/parallel")->Arg(1 << 20);
BENCHMARK(BM_Sum<false>)->Name("sum/reference")->Arg(1 << 20);

BENCHMARK_MAIN();
