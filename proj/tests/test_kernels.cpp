#include <catch_amalgamated.hpp>

#include <random>

#include "ioodg/kernels.hpp"
#include "ioodg/parallel.hpp"
#include "oracles.hpp"

using namespace ioodg;
namespace k = ioodg::kernels;

namespace {

std::vector<double> values(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("OpenMP kernels are bit-identical to the serial reference") {
  parallel::set_worker_threads(4);
  std::mt19937_64 rng(21);
  for (const k::GemmDims d : {k::GemmDims{1, 1, 1}, k::GemmDims{7, 5, 3}, k::GemmDims{64, 33, 17},
                              k::GemmDims{300, 16, 16}}) {
    for (bool accumulate : {false, true}) {
      const auto a = values(rng, d.m * d.k);
      const auto b = values(rng, d.k * d.n);
      const auto bt = values(rng, d.n * d.k);
      const auto at = values(rng, d.k * d.m);
      const auto init = values(rng, d.m * d.n);

      auto c1 = init, c2 = init;
      k::serial::matmul(a, b, c1, d, accumulate);
      k::omp::matmul(a, b, c2, d, accumulate);
      CHECK(c1 == c2);

      c1 = init, c2 = init;
      k::serial::matmul_nt(a, bt, c1, d, accumulate);
      k::omp::matmul_nt(a, bt, c2, d, accumulate);
      CHECK(c1 == c2);

      c1 = init, c2 = init;
      k::serial::matmul_tn(at, b, c1, d, accumulate);
      k::omp::matmul_tn(at, b, c2, d, accumulate);
      CHECK(c1 == c2);
    }
  }

  for (std::size_t n : {1u, 9u, 500u, 3000u}) {
    const auto a = oracle::random_points(rng, 17);
    const auto pts = oracle::random_points(rng, n);
    std::vector<double> d1(17 * n), d2(17 * n);
    k::serial::squared_distances(a, pts, d1);
    k::omp::squared_distances(a, pts, d2);
    CHECK(d1 == d2);

    const std::size_t m = std::min<std::size_t>(n, 40);
    std::vector<std::size_t> f1(m), f2(m);
    k::serial::farthest_points(pts, n / 2, f1);
    k::omp::farthest_points(pts, n / 2, f2);
    CHECK(f1 == f2);
  }
  parallel::set_worker_threads(1);
}

TEST_CASE("matmul variants agree with a naive triple loop") {
  std::mt19937_64 rng(22);
  const k::GemmDims d{6, 4, 5};
  const auto a = values(rng, d.m * d.k);
  const auto b = values(rng, d.k * d.n);
  std::vector<double> c(d.m * d.n);
  k::matmul(a, b, c, d, false);
  std::vector<double> b_t(d.n * d.k), a_t(d.k * d.m);
  for (std::size_t p = 0; p < d.k; ++p) {
    for (std::size_t j = 0; j < d.n; ++j) b_t[j * d.k + p] = b[p * d.n + j];
    for (std::size_t i = 0; i < d.m; ++i) a_t[p * d.m + i] = a[i * d.k + p];
  }
  std::vector<double> c_nt(d.m * d.n), c_tn(d.m * d.n);
  k::matmul_nt(a, b_t, c_nt, d, false);
  k::matmul_tn(a_t, b, c_tn, d, false);
  for (std::size_t i = 0; i < d.m; ++i)
    for (std::size_t j = 0; j < d.n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) s += a[i * d.k + p] * b[p * d.n + j];
      CHECK_THAT(c[i * d.n + j], Catch::Matchers::WithinAbs(s, 1e-14));
      CHECK_THAT(c_nt[i * d.n + j], Catch::Matchers::WithinAbs(s, 1e-14));
      CHECK_THAT(c_tn[i * d.n + j], Catch::Matchers::WithinAbs(s, 1e-14));
    }
}

TEST_CASE("thread cap follows IOODG_THREADS semantics") {
  parallel::set_worker_threads(0);
  CHECK(parallel::worker_threads() == 1);
  CHECK_FALSE(parallel::should_parallelize(1u << 30));
  parallel::set_worker_threads(3);
  CHECK(parallel::worker_threads() == 3);
  CHECK(parallel::should_parallelize(1u << 20));
  CHECK_FALSE(parallel::should_parallelize(10));
  parallel::set_worker_threads(1);
}
