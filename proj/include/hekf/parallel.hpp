#pragma once

#include <cstddef>
#include <functional>

namespace hekf {

// Worker count: HEKF_KIT_THREADS if set to a positive integer, otherwise
// the hardware concurrency (at least 1).
std::size_t worker_count();

// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
// runs exactly once; callers write results into per-index slots so that the
// outcome does not depend on scheduling. The first exception thrown by any
// body is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hekf
