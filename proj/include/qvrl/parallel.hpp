#pragma once

// Index-parallel kernels. Every body writes only to slots owned by its index,
// so the parallel and serial drivers produce identical results; reductions
// are done afterwards in index order by the caller.

#include <cstddef>
#include <exception>
#include <optional>
#include <vector>

#ifdef QVRL_HAVE_OPENMP
#include <omp.h>
#endif

namespace qvrl {

/// Worker count: explicit request, else QVRL_WORKERS, else 1.
int resolve_workers(std::optional<int> requested = std::nullopt);

/// Serial reference driver.
template <class Body>
void for_each_index_serial(std::size_t n, Body&& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

/// OpenMP driver. Exceptions thrown by `body` are captured per index and the
/// lowest-index one is rethrown after the loop.
template <class Body>
void for_each_index_parallel(std::size_t n, int workers, Body&& body) {
  if (workers <= 1 || n <= 1) {
    for_each_index_serial(n, body);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#ifdef QVRL_HAVE_OPENMP
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
#endif
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class Body>
void for_each_index(std::size_t n, int workers, Body&& body) {
  if (workers <= 1)
    for_each_index_serial(n, body);
  else
    for_each_index_parallel(n, workers, body);
}

}  // namespace qvrl
