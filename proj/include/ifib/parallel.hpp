#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ifib {

// Worker cap: IFIB_THREADS when set, hardware concurrency otherwise.
inline int worker_count() {
  if (const char* env = std::getenv("IFIB_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs f(i) for i in [0, n); results must be written to per-index slots so
// the outcome is identical for any worker count.
inline void parallel_for(int n, const std::function<void(int)>& f) {
  int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ifib
