#pragma once

#include <cstddef>
#include <functional>

namespace keco {

/// Upper bound on worker threads used internally. 0 resets to the default,
/// which is KECO_THREADS when set and 1 otherwise.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks; callers
/// write results into pre-sized slots so output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace keco
