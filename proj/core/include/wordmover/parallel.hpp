#pragma once

#include <cstddef>
#include <functional>

namespace wordmover {

/// Worker count from the WME_WORKERS environment variable if it holds a
/// positive integer, otherwise std::thread::hardware_concurrency() (min 1).
std::size_t default_workers();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Every index
/// writes its own output slot, so results do not depend on the schedule.
/// If bodies throw, the exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace wordmover
