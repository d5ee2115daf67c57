#pragma once

#include <cstddef>
#include <functional>

namespace rebelhad {

// Process-wide worker count used by parallel_for; defaults to 1.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker
// and callers only write index-private outputs, so results do not depend
// on the thread count.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace rebelhad
