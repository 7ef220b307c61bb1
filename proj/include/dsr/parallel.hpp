#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dsr {

inline int resolve_default_threads() {
  if (const char* env = std::getenv("DSR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

namespace detail {
inline int& thread_count_slot() {
  static int n = 0;  // 0 = not yet resolved
  return n;
}
}  // namespace detail

// Worker count for parallel loops. Resolution order: set_thread_count()
// > DSR_THREADS env > hardware_concurrency.
inline int thread_count() {
  int& n = detail::thread_count_slot();
  if (n <= 0) n = resolve_default_threads();
  return n;
}

inline void set_thread_count(int n) {
  detail::thread_count_slot() = n > 0 ? n : resolve_default_threads();
}

// Runs body(i) for i in [0, n). Each index must write only its own outputs;
// under that contract the result is bit-identical for any worker count.
template <typename F>
inline void parallel_for(int n, F&& body) {
#ifdef _OPENMP
  const int workers = std::min(thread_count(), n);
  if (workers > 1) {
#pragma omp parallel for schedule(static) num_threads(workers)
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  for (int i = 0; i < n; ++i) body(i);
}

}  // namespace dsr
