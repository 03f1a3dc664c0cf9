#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace tcqa {

/// Effective worker count: `requested`, or the TCQA_THREADS environment
/// variable, or hardware concurrency when `requested` is 0.
unsigned resolve_threads(unsigned requested);

/// Runs jobs 0..job_count-1 on up to `threads` workers. Jobs must write to
/// disjoint slots; callers merge results in job order, which keeps every
/// reduction deterministic regardless of the worker count.
void parallel_jobs(std::size_t job_count, unsigned threads,
                   const std::function<void(std::size_t)>& job);

/// Splits [0, n) into at most `chunk_count` contiguous ranges.
std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t n,
                                                              std::size_t chunk_count);

}  // namespace tcqa
