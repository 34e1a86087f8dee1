#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "toucan/common.hpp"

namespace toucan {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{1};
  return threads;
}
}  // namespace detail

/// Worker count used by parallel_for; 1 (the default) runs inline.
inline void set_num_threads(int n) { detail::thread_setting().store(std::max(1, n)); }
inline int num_threads() { return detail::thread_setting().load(); }

/// Runs body(i) for i in [0, n). Work items must write to disjoint outputs; results are
/// therefore independent of the thread count. The first exception thrown is rethrown.
template <typename Body>
void parallel_for(Index n, Body&& body) {
  const int workers = static_cast<int>(std::min<Index>(num_threads(), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace toucan
