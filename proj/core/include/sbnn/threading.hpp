#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sbnn {

/// Runs fn(shard) for every shard in [0, n_shards) on at most
/// n_threads workers.  The caller fixes the shard decomposition and
/// combines per-shard results in shard order, so outputs are
/// bit-identical for every thread count; only wall time changes.
inline void parallel_shards(int n_shards, int n_threads,
                            const std::function<void(int)>& fn) {
  if (n_shards <= 0) return;
  const int workers = std::min(std::max(n_threads, 1), n_shards);
  if (workers == 1) {
    for (int s = 0; s < n_shards; ++s) fn(s);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int s = next.fetch_add(1);
      if (s >= n_shards || failed.load()) return;
      try {
        fn(s);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sbnn
