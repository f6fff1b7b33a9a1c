#pragma once

#include <cstddef>
#include <functional>

namespace scribreg {

// Worker cap: SCRIBREG_THREADS if set and positive, else hardware concurrency.
int worker_count();

// Calls fn(k) for k in [0, n), possibly concurrently. Callers write results
// into per-index slots and reduce afterwards, so results never depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace scribreg
