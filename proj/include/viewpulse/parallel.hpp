#pragma once

#include <cstddef>
#include <functional>

namespace viewpulse::num {

/// Worker count for internal parallelism: min(hardware, VIEWPULSE_THREADS).
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers get
/// determinism by writing to disjoint slots and reducing in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace viewpulse::num
