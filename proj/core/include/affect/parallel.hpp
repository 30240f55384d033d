#pragma once

#include <cstddef>
#include <functional>

namespace affect {

// Worker cap for kernels: AFFECT_NUM_THREADS if set, else hardware concurrency.
std::size_t max_threads();
void set_max_threads(std::size_t n);

// Runs body(begin, end) over disjoint chunks of [0, n). Each output element is
// owned by exactly one chunk, so results do not depend on the thread count.
void parallel_for(std::size_t n, std::size_t cost_per_item,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace affect
