#pragma once

#include <cstddef>
#include <functional>

namespace panokit {

// Worker cap: min(PANOKIT_THREADS, hardware threads). Never less than 1.
size_t max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; each
// index runs exactly once. fn must not touch shared mutable state unless
// externally synchronized. Falls back to a plain loop when only one worker
// is available.
void parallel_for(size_t n, const std::function<void(size_t)>& fn,
                  size_t thread_limit = 0);

}  // namespace panokit
