#pragma once

#include <functional>

namespace onedf {

/// Worker cap: ONEDF_THREADS when set (>= 1), hardware concurrency otherwise.
int worker_count();

/// Runs fn(0..n-1) on up to `threads` workers with static index striding, so
/// job-to-worker assignment does not depend on scheduling. Exceptions inside
/// fn must be handled by the caller's closure.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace onedf
