#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace compass {

/// SplitMix64 mix of (base, stream); used to derive per-worker / per-tree seeds
/// so results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Runs body(i) for i in [0, n) on up to hardware_concurrency threads.
/// The first exception thrown by any task is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace compass
