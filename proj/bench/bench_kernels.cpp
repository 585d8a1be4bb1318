// Serial reference kernels against their OpenMP counterparts. Thread count
// follows IOODG_THREADS / OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ioodg/kernels.hpp"

namespace k = ioodg::kernels;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::vector<ioodg::geo::Point> random_points(std::size_t n, unsigned seed) {
  const auto v = random_values(3 * n, seed);
  std::vector<ioodg::geo::Point> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return p;
}

template <auto Fn>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::GemmDims d{n, 64, 64};
  const auto a = random_values(d.m * d.k, 1);
  const auto b = random_values(d.k * d.n, 2);
  std::vector<double> c(d.m * d.n);
  for (auto _ : state) {
    Fn(a, b, c, d, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.m * d.k * d.n));
}

template <auto Fn>
void bm_distances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_points(64, 3);
  const auto b = random_points(n, 4);
  std::vector<double> out(a.size() * b.size());
  for (auto _ : state) {
    Fn(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void bm_fps(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = random_points(n, 5);
  std::vector<std::size_t> out(64);
  for (auto _ : state) {
    Fn(p, 0, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(bm_matmul<k::serial::matmul>)->Arg(256)->Arg(4096);
BENCHMARK(bm_matmul<k::omp::matmul>)->Arg(256)->Arg(4096);
BENCHMARK(bm_distances<k::serial::squared_distances>)->Arg(256)->Arg(16384);
BENCHMARK(bm_distances<k::omp::squared_distances>)->Arg(256)->Arg(16384);
BENCHMARK(bm_fps<k::serial::farthest_points>)->Arg(256)->Arg(16384);
BENCHMARK(bm_fps<k::omp::farthest_points>)->Arg(256)->Arg(16384);

BENCHMARK_MAIN();
