#pragma once

#include <cstddef>
#include <functional>

namespace packbench {

/// Worker count: hardware concurrency, capped by PACKBENCH_THREADS when set.
unsigned thread_count();

/// Runs fn(k) for k in [0, n) on up to thread_count() threads. Each index is
/// visited exactly once; fn must not touch shared mutable state. The first
/// exception thrown is rethrown after all threads finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace packbench
