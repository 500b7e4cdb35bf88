#pragma once
// Deterministic task-parallel loop used for chains and Monte Carlo replications.
// Work items are indexed; every item derives its own RNG stream from the index,
// so results do not depend on the thread schedule.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pslfm {

// Worker cap: PSLFM_THREADS env var if set, else hardware concurrency.
inline int max_threads() {
  if (const char* env = std::getenv("PSLFM_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

template <typename Fn>
void parallel_for(int n_items, Fn&& fn, int n_threads = -1) {
  if (n_threads <= 0) n_threads = max_threads();
  if (n_threads > n_items) n_threads = n_items;
  if (n_items <= 0) return;
  if (n_threads <= 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_items) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pslfm
