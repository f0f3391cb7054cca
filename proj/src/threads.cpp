#include "panokit/threads.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace panokit {

size_t max_threads() {
  size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("PANOKIT_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && size_t(v) < hw) hw = size_t(v);
  }
  return hw;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn,
                  size_t thread_limit) {
  if (n == 0) return;
  size_t workers = max_threads();
  if (thread_limit > 0) workers = std::min(workers, thread_limit);
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  size_t chunk = (n + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    size_t lo = w * chunk;
    size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace panokit
