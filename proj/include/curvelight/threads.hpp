#pragma once

#include <cstdint>
#include <functional>

namespace curvelight {

/// Worker count for data-parallel loops. Controlled by CURVELIGHT_THREADS
/// (0 or 1 = single-threaded); defaults to the hardware concurrency.
int worker_count();

/// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Chunks write disjoint outputs and every per-element reduction
/// keeps its fixed loop order, so results are identical for any worker
/// count, bit for bit.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace curvelight
