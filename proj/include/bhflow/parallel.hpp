#pragma once

// Process-wide worker count and a static-partition parallel loop. Each index
// is handled by exactly one worker, so results written per index are
// identical for every thread count.

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace bhflow {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

inline void set_threads(int n) { detail::thread_setting() = std::max(1, n); }
inline int threads() { return detail::thread_setting(); }

/// Runs fn(i) for i in [0, n). The first exception thrown by any worker is
/// rethrown on the caller.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace bhflow
