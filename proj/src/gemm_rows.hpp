#pragma once

#include <cstddef>
#include <vector>

// Row-level inner loops shared by the serial and OpenMP kernels so both sum
// every output element in the same order.

namespace ioodg::kernels::detail {

// c[0..n) += sum_p a[p * a_stride] * b[p * n + j], p ascending.
inline void axpy_row(const double* a, std::size_t a_stride, const double* __restrict b, double* __restrict c,
                     std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double ap = a[p * a_stride];
    const double* __restrict bp = b + p * n;
#pragma GCC ivdep
    for (std::size_t j = 0; j < n; ++j) c[j] += ap * bp[j];
  }
}

// (n x k) -> (k x n)
inline std::vector<double> transposed(const double* b, std::size_t n, std::size_t k) {
  std::vector<double> t(n * k);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) t[p * n + j] = b[j * k + p];
  return t;
}

// Row i of a * b^T with b already transposed, summed from zero and then
// added to c when accumulating.
inline void nt_row(const double* ai, const double* bt, double* ci, double* scratch, std::size_t k, std::size_t n,
                   bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    axpy_row(ai, 1, bt, ci, k, n);
    return;
  }
  for (std::size_t j = 0; j < n; ++j) scratch[j] = 0.0;
  axpy_row(ai, 1, bt, scratch, k, n);
  for (std::size_t j = 0; j < n; ++j) ci[j] += scratch[j];
}

}  // namespace ioodg::kernels::detail
