#include "qbsde/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "qbsde/errors.hpp"

namespace qbsde::par {

namespace {
std::atomic<int> g_workers{1};
}

int worker_count() { return g_workers.load(std::memory_order_relaxed); }

void set_worker_count(int n) {
  if (n < 1 || n > 1024) throw validation_error("worker count must be in [1,1024]");
  g_workers.store(n, std::memory_order_relaxed);
}

std::size_t block_count(std::size_t n_items) {
  return (n_items + kBlockSize - 1) / kBlockSize;
}

void for_blocks(std::size_t n_items,
                const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t nb = block_count(n_items);
  if (nb == 0) return;

  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * kBlockSize;
    const std::size_t end = std::min(begin + kBlockSize, n_items);
    fn(b, begin, end);
  };

  const int workers = worker_count();
  if (workers == 1 || nb == 1) {
    for (std::size_t b = 0; b < nb; ++b) run_block(b);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
      if (b >= nb) return;
      try {
        run_block(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min<std::size_t>(workers, nb);
  pool.reserve(n_threads);
  for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace qbsde::par
