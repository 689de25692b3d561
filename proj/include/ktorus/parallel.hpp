#pragma once

#include <cstddef>
#include <functional>

namespace kt {

/// Worker budget: KT_THREADS when set to a positive integer, otherwise the hardware
/// concurrency (at least 1).
int thread_budget();

/// Runs body(i) for i in [0, count) on up to thread_budget() threads. The first
/// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace kt
