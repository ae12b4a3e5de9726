#pragma once

#include <cstddef>
#include <functional>

namespace dflow {

/// Caps the number of worker threads used by point-parallel loops (>= 1).
void set_worker_count(int n);
int worker_count();

/// Splits [0, n) into contiguous chunks and runs body(begin, end) on each.
/// Chunks write disjoint outputs, so results do not depend on the partition.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace dflow
