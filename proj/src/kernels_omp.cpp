#include <omp.h>

#include <algorithm>
#include <limits>
#include <vector>

#include "gemm_rows.hpp"
#include "ioodg/kernels.hpp"
#include "ioodg/parallel.hpp"

namespace ioodg::kernels::omp {

// Rows are partitioned across threads; each output element is summed in the
// same order as the serial kernel.

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d, bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static) num_threads(parallel::worker_threads())
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * d.n;
    if (!accumulate) std::fill(ci, ci + d.n, 0.0);
    detail::axpy_row(a.data() + i * d.k, 1, b.data(), ci, d.k, d.n);
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               GemmDims d, bool accumulate) {
  const std::vector<double> bt = detail::transposed(b.data(), d.n, d.k);
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel num_threads(parallel::worker_threads())
  {
    std::vector<double> scratch(d.n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i)
      detail::nt_row(a.data() + i * d.k, bt.data(), c.data() + i * d.n, scratch.data(), d.k, d.n, accumulate);
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               GemmDims d, bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static) num_threads(parallel::worker_threads())
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * d.n;
    if (!accumulate) std::fill(ci, ci + d.n, 0.0);
    detail::axpy_row(a.data() + i, d.m, b.data(), ci, d.k, d.n);
  }
}

void squared_distances(std::span<const geo::Point> a, std::span<const geo::Point> b,
                       std::span<double> out) {
  const auto m = static_cast<std::ptrdiff_t>(a.size());
  const std::size_t n = b.size();
#pragma omp parallel for schedule(static) num_threads(parallel::worker_threads())
  for (std::ptrdiff_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = geo::squared_distance(a[i], b[j]);
}

void farthest_points(std::span<const geo::Point> points, std::size_t start,
                     std::span<std::size_t> out) {
  const auto n = static_cast<std::ptrdiff_t>(points.size());
  std::vector<double> min_dist(points.size(), std::numeric_limits<double>::infinity());
  std::size_t current = start;
  const int threads = parallel::worker_threads();
  std::vector<double> best_value(threads);
  std::vector<std::size_t> best_index(threads);
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s] = current;
    const geo::Point c = points[current];
    std::fill(best_value.begin(), best_value.end(), -1.0);
#pragma omp parallel num_threads(threads)
    {
      const int tid = omp_get_thread_num();
      double best = -1.0;
      std::size_t idx = 0;
#pragma omp for schedule(static)
      for (std::ptrdiff_t j = 0; j < n; ++j) {
        min_dist[j] = std::min(min_dist[j], geo::squared_distance(points[j], c));
        if (min_dist[j] > best) {
          best = min_dist[j];
          idx = static_cast<std::size_t>(j);
        }
      }
      best_value[tid] = best;
      best_index[tid] = idx;
    }
    // Static chunks are ordered by thread id, so a strict '>' keeps the lowest index.
    double best = -1.0;
    std::size_t idx = 0;
    for (int t = 0; t < threads; ++t) {
      if (best_value[t] > best) {
        best = best_value[t];
        idx = best_index[t];
      }
    }
    current = idx;
  }
}

}  // namespace ioodg::kernels::omp
