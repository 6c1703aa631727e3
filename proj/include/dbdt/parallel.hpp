#pragma once

#include <cstddef>
#include <functional>

namespace dbdt {

// Worker cap: DBDT_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker and
// callers write to per-index slots, so results never depend on thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dbdt
