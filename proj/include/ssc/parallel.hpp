#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace ssc {

/// Sets the OpenMP worker count; values < 1 keep the runtime default.
void set_jobs(int jobs);
int max_jobs();

/// Runs body(i) for i in [0, n) across the OpenMP pool. If any calls throw,
/// the exception from the smallest index is rethrown once all have finished,
/// so the error reported does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace ssc
