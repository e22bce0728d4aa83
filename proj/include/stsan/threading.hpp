#pragma once

#include <cstdint>
#include <functional>

namespace stsan {

// Process-wide worker count, set once by the CLI --threads flag.
void set_thread_count(int n);
int thread_count();

// Runs fn(block_index) for block_index in [0, blocks). Blocks are distributed
// over the configured workers; results must not depend on which worker runs a
// block. Exceptions propagate to the caller.
void parallel_blocks(int blocks, const std::function<void(int)>& fn);

}  // namespace stsan
