#include <algorithm>
#include <limits>

#include "gemm_rows.hpp"
#include "ioodg/kernels.hpp"
#include "ioodg/parallel.hpp"

namespace ioodg::kernels {
namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + d.m * d.n, 0.0);
  for (std::size_t i = 0; i < d.m; ++i) detail::axpy_row(a.data() + i * d.k, 1, b.data(), c.data() + i * d.n, d.k, d.n);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               GemmDims d, bool accumulate) {
  const std::vector<double> bt = detail::transposed(b.data(), d.n, d.k);
  std::vector<double> scratch(d.n);
  for (std::size_t i = 0; i < d.m; ++i)
    detail::nt_row(a.data() + i * d.k, bt.data(), c.data() + i * d.n, scratch.data(), d.k, d.n, accumulate);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               GemmDims d, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + d.m * d.n, 0.0);
  for (std::size_t i = 0; i < d.m; ++i) detail::axpy_row(a.data() + i, d.m, b.data(), c.data() + i * d.n, d.k, d.n);
}

void squared_distances(std::span<const geo::Point> a, std::span<const geo::Point> b,
                       std::span<double> out) {
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = geo::squared_distance(a[i], b[j]);
}

void farthest_points(std::span<const geo::Point> points, std::size_t start,
                     std::span<std::size_t> out) {
  const std::size_t n = points.size();
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::size_t current = start;
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s] = current;
    double best = -1.0;
    std::size_t best_index = 0;
    for (std::size_t j = 0; j < n; ++j) {
      min_dist[j] = std::min(min_dist[j], geo::squared_distance(points[j], points[current]));
      if (min_dist[j] > best) {
        best = min_dist[j];
        best_index = j;
      }
    }
    current = best_index;
  }
}

}  // namespace serial

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d, bool accumulate) {
  if (parallel::should_parallelize(d.m * d.k * d.n))
    omp::matmul(a, b, c, d, accumulate);
  else
    serial::matmul(a, b, c, d, accumulate);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               GemmDims d, bool accumulate) {
  if (parallel::should_parallelize(d.m * d.k * d.n))
    omp::matmul_nt(a, b, c, d, accumulate);
  else
    serial::matmul_nt(a, b, c, d, accumulate);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               GemmDims d, bool accumulate) {
  if (parallel::should_parallelize(d.m * d.k * d.n))
    omp::matmul_tn(a, b, c, d, accumulate);
  else
    serial::matmul_tn(a, b, c, d, accumulate);
}

void squared_distances(std::span<const geo::Point> a, std::span<const geo::Point> b,
                       std::span<double> out) {
  if (parallel::should_parallelize(a.size() * b.size() * 8))
    omp::squared_distances(a, b, out);
  else
    serial::squared_distances(a, b, out);
}

void farthest_points(std::span<const geo::Point> points, std::size_t start,
                     std::span<std::size_t> out) {
  if (parallel::should_parallelize(points.size() * out.size() * 8))
    omp::farthest_points(points, start, out);
  else
    serial::farthest_points(points, start, out);
}

}  // namespace ioodg::kernels
