#pragma once

#include <cstddef>
#include <functional>

namespace omniclip {

// Persistent worker pool used by the matmul kernels. Work is split into
// contiguous chunks so per-element accumulation order never depends on the
// thread count; results are bit-identical for 1..N threads.
//
// Thread count: OMNICLIP_THREADS env var, else hardware_concurrency.
std::size_t pool_threads();

// Runs body(begin, end) over a static partition of [0, n). Calls from inside
// a worker run inline (no nesting).
void parallel_for(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& body);

} // namespace omniclip
