#pragma once

#include <cstddef>
#include <functional>

namespace nphmm {

/// Worker count: NPHMM_THREADS when set to a positive integer, otherwise the
/// machine's hardware concurrency.
int thread_count();

/// Runs task(0..count-1) on up to `threads` workers (0 = thread_count()).
/// Every index runs exactly once; the first exception (by index) is rethrown
/// after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task, int threads = 0);

}  // namespace nphmm
