#pragma once
#include <cstddef>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace oujm {

// Runs fn(i) for i in [0, n). With threads <= 1 (or no OpenMP) this is a
// plain serial loop; results must not depend on execution order, so the
// parallel and serial paths are interchangeable and tested against each
// other.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
#ifdef _OPENMP
  if (threads > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long i = 0; i < static_cast<long>(n); ++i) fn(static_cast<std::size_t>(i));
    return;
  }
#endif
  (void)threads;
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace oujm
