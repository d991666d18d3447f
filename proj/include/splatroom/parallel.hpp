#pragma once

#include <cstddef>
#include <functional>

namespace splatroom {

// Worker count used by parallel_for. 0 selects hardware concurrency.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [0, n). Every index is visited exactly once; callers
// write results to per-index slots so the outcome never depends on the
// number of workers or their scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace splatroom
