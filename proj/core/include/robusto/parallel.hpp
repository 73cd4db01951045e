#pragma once

#include <functional>

namespace robusto {

// Process-wide worker cap for the element loops. 1 (default) runs inline and
// is bitwise deterministic; N > 1 splits [0, n) into N contiguous chunks on
// std::thread. Callers that reduce must combine per-chunk partials in chunk
// order to stay deterministic for a fixed N.
void set_num_threads(int n);
int num_threads();

// fn(begin, end, chunk_index) over a partition of [0, n).
void parallel_chunks(int n, const std::function<void(int, int, int)>& fn);

}  // namespace robusto
