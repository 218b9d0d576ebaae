#pragma once

#include <cstddef>
#include <functional>

namespace qbsde::par {

// All multi-threaded work is split into fixed-size blocks of items.  Workers
// process whole blocks and write into per-block slots; block results are
// combined sequentially in block order.  Output is therefore byte-identical
// for any worker count.

inline constexpr std::size_t kBlockSize = 4096;

int worker_count();
void set_worker_count(int n);

std::size_t block_count(std::size_t n_items);

/// Runs fn(block_index, begin, end) over every block of [0, n_items).
/// fn must only write to state owned by its block.
void for_blocks(std::size_t n_items,
                const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace qbsde::par
