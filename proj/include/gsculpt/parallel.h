#pragma once

#include <cstddef>
#include <functional>

namespace gsculpt {

// Worker cap: GSCULPT_WORKERS when set and positive, else hardware threads.
int WorkerCount();

// Runs body(i) for i in [0, n) on up to `workers` threads. Results must not
// depend on scheduling; exceptions are rethrown on the caller (first by index).
void ParallelFor(size_t n, const std::function<void(size_t)>& body, int workers = 0);

}  // namespace gsculpt
