#include "ioodg/parallel.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>
#include <string>

namespace ioodg::parallel {
namespace {

constexpr std::size_t kMinParallelWork = 1 << 15;

int threads_from_env() {
  if (const char* env = std::getenv("IOODG_THREADS")) {
    try {
      const int n = std::stoi(env);
      return n < 1 ? 1 : n;
    } catch (...) {
      return 1;
    }
  }
  return omp_get_max_threads();
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{threads_from_env()};
  return cap;
}

}  // namespace

int worker_threads() { return thread_cap().load(std::memory_order_relaxed); }

void set_worker_threads(int threads) {
  thread_cap().store(threads < 1 ? 1 : threads, std::memory_order_relaxed);
}

bool should_parallelize(std::size_t work) {
  return worker_threads() > 1 && !omp_in_parallel() && work >= kMinParallelWork;
}

}  // namespace ioodg::parallel
