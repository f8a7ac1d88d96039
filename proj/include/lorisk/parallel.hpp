#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "lorisk/common.hpp"

namespace lorisk {

// Run body(i) for i in [0, count). Work items must not depend on each other;
// any state they write must be indexed by i so the result is independent of
// the thread count. The first exception thrown by any item is rethrown on the
// calling thread after all workers join.
template <class Fn>
void parallel_for(int count, int threads, Fn&& body) {
  if (count <= 0) return;
  if (threads < 1) throw DomainError("parallel_for: threads must be >= 1");
  threads = std::min(threads, count);
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }

  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace lorisk
