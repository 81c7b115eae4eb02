#pragma once

#include <cstddef>
#include <functional>

namespace difr {

/// Worker count: DIFR_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) across worker threads. Callers write results
/// into slots indexed by i, so output never depends on the schedule. The
/// first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace difr
