#pragma once

#include <cstddef>
#include <functional>

namespace tcm {

// Worker count: TCM_THREADS if set, else hardware concurrency capped at 8.
std::size_t worker_count();

// Static block partition of [0, n) across workers; fn(i) is called exactly
// once per index, each index on one thread, so per-index writes stay
// deterministic regardless of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tcm
