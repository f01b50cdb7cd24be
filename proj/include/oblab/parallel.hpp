#pragma once

#include <cstddef>
#include <functional>

namespace oblab {

/// Worker count used when a caller passes 0. Defaults to 1; the CLI sets it
/// from --workers.
std::size_t default_workers();
void set_default_workers(std::size_t n);

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
/// visited exactly once; callers write results into per-index slots and
/// reduce afterwards in index order, so results never depend on scheduling.
/// The first exception thrown by any body is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace oblab
