#pragma once

#include <cstddef>
#include <functional>

namespace warpcode {

// Worker cap from WARPCODE_THREADS (unset or invalid: hardware concurrency).
int thread_limit();

// Runs body(i) for i in [0, count) on up to thread_limit() threads. Callers
// that reduce results must store per-index partials and sum them in index
// order so the outcome does not depend on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace warpcode
