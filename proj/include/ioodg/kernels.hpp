#pragma once

#include <cstddef>
#include <span>

#include "ioodg/geometry.hpp"

// Dense inner loops used by the autodiff ops and the geometry routines.
// `serial` is the reference; `omp` must produce bit-identical results.
// The unqualified entry points dispatch on problem size and IOODG_THREADS.

namespace ioodg::kernels {

struct GemmDims {
  std::size_t m, k, n;
};

#define IOODG_KERNEL_SET                                                                        \
  /* c(m,n) (+)= a(m,k) * b(k,n) */                                                            \
  void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,       \
              GemmDims d, bool accumulate);                                                    \
  /* c(m,n) (+)= a(m,k) * b(n,k)^T */                                                          \
  void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,    \
                 GemmDims d, bool accumulate);                                                 \
  /* c(m,n) (+)= a(k,m)^T * b(k,n) */                                                          \
  void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,    \
                 GemmDims d, bool accumulate);                                                 \
  /* out(i,j) = |a_i - b_j|^2 */                                                               \
  void squared_distances(std::span<const geo::Point> a, std::span<const geo::Point> b,         \
                         std::span<double> out);                                               \
  /* greedy farthest point sampling, ties to lowest index */                                   \
  void farthest_points(std::span<const geo::Point> points, std::size_t start,                  \
                       std::span<std::size_t> out);

namespace serial {
IOODG_KERNEL_SET
}
namespace omp {
IOODG_KERNEL_SET
}
IOODG_KERNEL_SET

#undef IOODG_KERNEL_SET

}  // namespace ioodg::kernels
