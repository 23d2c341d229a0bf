#include "gtdlab/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gtdlab::kernels {

namespace {

int read_env_threads() {
  const char* s = std::getenv("GTD_LAB_THREADS");
  if (!s) return 1;
  int n = std::atoi(s);
  return n >= 1 ? n : 1;
}

std::atomic<int> g_threads{0};  // 0 = uninitialized

}  // namespace

int threads() {
  int t = g_threads.load(std::memory_order_relaxed);
  if (t == 0) {
    t = read_env_threads();
    g_threads.store(t, std::memory_order_relaxed);
  }
  return t;
}

void set_threads(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }

namespace detail {

void parallel_row_blocks(int rows, const std::function<void(int, int)>& fn) {
  int t = threads();
#ifdef _OPENMP
  if (t > 1 && rows > 1) {
    int nb = std::min(t, rows);
#pragma omp parallel for num_threads(nb) schedule(static)
    for (int b = 0; b < nb; ++b) {
      int lo = static_cast<int>(int64_t(rows) * b / nb);
      int hi = static_cast<int>(int64_t(rows) * (b + 1) / nb);
      if (lo < hi) fn(lo, hi);
    }
    return;
  }
#endif
  (void)t;
  if (rows > 0) fn(0, rows);
}

}  // namespace detail

}  // namespace gtdlab::kernels
