#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace cutmesh {

/// Worker count for element loops: CUTMESH_THREADS if set and positive,
/// otherwise the hardware concurrency.
inline int thread_count()
{
  if (const char* env = std::getenv("CUTMESH_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0)
        return n;
    }
    catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n). Callers write results into slot i and reduce
/// afterwards in index order, so output does not depend on scheduling. If any
/// call throws, the exception from the lowest index is rethrown.
template <class Body>
void parallel_for(std::size_t n, Body&& body, int threads = thread_count())
{
  threads = static_cast<int>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::size_t> error_index(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        }
        catch (...) {
          if (i < error_index[t]) {
            error_index[t] = i;
            errors[t] = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& th : pool)
    th.join();
  int first = -1;
  for (int t = 0; t < threads; ++t)
    if (errors[t] && (first < 0 || error_index[t] < error_index[first]))
      first = t;
  if (first >= 0)
    std::rethrow_exception(errors[first]);
}

}  // namespace cutmesh
