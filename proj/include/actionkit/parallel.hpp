#pragma once

#include <cstddef>
#include <functional>

namespace actionkit {

// Worker count: ACTION_KIT_THREADS caps it, hardware concurrency is the
// default. Always >= 1.
int thread_budget();

// Overrides the budget at runtime (>= 1). Callers that run several
// independent graphs on their own threads set this to 1 so inner loops stay
// inline; results are identical either way.
void set_thread_budget(int n);

namespace detail {
// Runs body over a contiguous partition of [0, n) on a persistent worker
// pool. Each chunk is owned by exactly one worker, so results never depend
// on the thread count.
void parallel_run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);
}  // namespace detail

template <typename F>
void parallel_for(std::size_t n, F&& body) {
  if (n == 0) return;
  const std::function<void(std::size_t, std::size_t)> fn = std::forward<F>(body);
  detail::parallel_run(n, fn);
}

}  // namespace actionkit
