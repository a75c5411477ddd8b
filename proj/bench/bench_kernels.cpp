// Serial vs OpenMP kernels at the shapes one training iteration uses
// (batch 256 through the 256 -> 64 discriminator layer).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "clarinet/kernels.hpp"

namespace k = clarinet::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <void (*Kernel)(const double*, const double*, double*, k::Dims)>
void BM_gemm_nn(benchmark::State& state) {
  const k::Dims d{static_cast<std::size_t>(state.range(0)), 256, 64};
  const auto a = random_buffer(d.n * d.m, 1);
  const auto b = random_buffer(d.m * d.p, 2);
  std::vector<double> c(d.n * d.p);
  k::set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    Kernel(a.data(), b.data(), c.data(), d);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * d.n * d.m * d.p));
}

template <void (*Kernel)(const double*, const double*, double*, k::Dims)>
void BM_gemm_tn(benchmark::State& state) {
  const k::Dims d{static_cast<std::size_t>(state.range(0)), 256, 64};
  const auto a = random_buffer(d.n * d.m, 1);
  const auto b = random_buffer(d.n * d.p, 2);
  std::vector<double> c(d.m * d.p);
  k::set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    Kernel(a.data(), b.data(), c.data(), d);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * d.n * d.m * d.p));
}

template <void (*Kernel)(const double*, const double*, double*, k::Dims)>
void BM_outer(benchmark::State& state) {
  const k::Dims d{static_cast<std::size_t>(state.range(0)), 64, 10};
  const auto a = random_buffer(d.n * d.m, 1);
  const auto b = random_buffer(d.n * d.p, 2);
  std::vector<double> c(d.n * d.m * d.p);
  k::set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    Kernel(a.data(), b.data(), c.data(), d);
    benchmark::DoNotOptimize(c.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm_nn<k::serial::gemm_nn>)->Args({256, 1})->Args({2048, 1});
BENCHMARK(BM_gemm_nn<k::omp::gemm_nn>)->Args({256, 2})->Args({256, 4})->Args({2048, 4});
BENCHMARK(BM_gemm_tn<k::serial::gemm_tn_acc>)->Args({256, 1})->Args({2048, 1});
BENCHMARK(BM_gemm_tn<k::omp::gemm_tn_acc>)->Args({256, 2})->Args({256, 4})->Args({2048, 4});
BENCHMARK(BM_outer<k::serial::outer_rows>)->Args({256, 1});
BENCHMARK(BM_outer<k::omp::outer_rows>)->Args({256, 4});

BENCHMARK_MAIN();
