#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace layerpool {

/// Worker count: hardware concurrency, capped by LAYERPOOL_THREADS when set to a positive integer.
inline std::size_t worker_count() {
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("LAYERPOOL_THREADS")) {
    try {
      const long value = std::stol(cap);
      if (value > 0) workers = std::min(workers, static_cast<std::size_t>(value));
    } catch (const std::exception&) {
    }
  }
  return workers;
}

namespace detail {
inline thread_local bool in_worker = false;
}

/// Calls `fn(i)` for i in [0, n) on up to worker_count() threads. The first
/// exception thrown by any call is rethrown after all workers stop. Calls
/// made from inside a worker run serially on that worker.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = detail::in_worker ? 1 : std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        detail::in_worker = true;
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace layerpool
