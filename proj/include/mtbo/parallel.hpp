#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mtbo {

// Cap worker threads process-wide (CLI --threads). 0 leaves the OpenMP default.
inline void set_thread_cap(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs fn(i) for i in [0, n). Iterations must be independent and write only to
// their own output slots; reductions over the slots stay serial at the call
// site so results do not depend on the schedule or thread count.
template <typename Fn>
void parallel_for_index(std::size_t n, Fn&& fn, bool parallel = true) {
#ifdef _OPENMP
  if (parallel && n > 1) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  (void)parallel;
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace mtbo
