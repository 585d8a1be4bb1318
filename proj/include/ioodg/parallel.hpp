#pragma once

#include <cstddef>

namespace ioodg::parallel {

/// Worker thread cap. Reads IOODG_THREADS once; 0 or 1 means serial.
/// Unset falls back to the OpenMP default.
int worker_threads();

/// Overrides the environment for the rest of the process (tests, benchmarks).
void set_worker_threads(int threads);

/// True when a kernel of `work` scalar operations should fan out.
bool should_parallelize(std::size_t work);

}  // namespace ioodg::parallel
