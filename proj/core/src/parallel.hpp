#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace vpblab::detail {

inline int worker_count(int jobs) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, std::min(hw > 0 ? hw : 1, jobs));
}

/// Runs f(thread_id, begin, end) over a fixed block partition of [0, n).
/// The partition depends only on n and the worker count, so per-thread
/// accumulators reduced in thread order give deterministic results.
inline void parallel_blocks(int n, const std::function<void(int, int, int)>& f) {
  const int workers = worker_count(n);
  if (workers <= 1 || n <= 1) {
    f(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + workers - 1) / workers;
  for (int t = 0; t < workers; ++t) {
    int begin = t * chunk;
    int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(f, t, begin, end);
  }
  for (auto& th : pool) th.join();
}

}  // namespace vpblab::detail
