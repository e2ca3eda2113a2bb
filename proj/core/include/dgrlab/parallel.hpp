#pragma once

#include <cstddef>
#include <functional>

namespace dgrlab {

// Worker count for internal parallel loops. Read once from DGRLAB_THREADS;
// defaults to 1.
std::size_t thread_budget();
void set_thread_budget(std::size_t threads);

// Runs body(i) for i in [begin, end). Each index is handled by exactly one
// worker, so callers that write disjoint outputs per index stay bit-exact
// regardless of the worker count.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body,
                  std::size_t min_work_per_index = 1);

}  // namespace dgrlab
