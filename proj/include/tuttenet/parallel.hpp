#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace tuttenet {

/// Worker count: TUTTENET_THREADS if set and positive, else the hardware
/// concurrency.
int thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; results written to disjoint slots are therefore
/// independent of the thread count. The first exception (by chunk order) is
/// rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 256);

} // namespace tuttenet
