#pragma once

#include <cstddef>
#include <functional>

namespace ploff {

// Worker cap: PLOFF_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Splits [0, n) into contiguous chunks, one per worker. Each index is visited
// exactly once, so callers writing disjoint outputs get results that do not
// depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace ploff
