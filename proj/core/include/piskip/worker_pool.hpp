#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace piskip
{
/**
 * @brief A fixed set of threads running one bulk-synchronous job at a time.
 *
 * Run(n, fn) executes fn(0) .. fn(n-1) on n distinct threads concurrently (the caller
 * runs fn(0)), so jobs may synchronize among themselves with barriers. The pool grows
 * on demand to n - 1 background threads.
 */
class WorkerPool
{
 public:
  explicit WorkerPool(std::size_t threads = 0);

  WorkerPool(const WorkerPool &) = delete;
  WorkerPool(WorkerPool &&) = delete;
  auto operator=(const WorkerPool &) -> WorkerPool & = delete;
  auto operator=(WorkerPool &&) -> WorkerPool & = delete;

  ~WorkerPool();

  /// Blocks until all n jobs returned; rethrows the first exception raised.
  void Run(std::size_t n, const std::function<void(std::size_t)> &fn);

  /// Threads available to Run, caller included.
  [[nodiscard]] auto size() const -> std::size_t;

 private:
  void Grow(std::size_t background);
  void Loop(std::size_t id);

  mutable std::mutex mu_{};
  std::condition_variable start_cv_{};
  std::condition_variable done_cv_{};
  std::vector<std::thread> threads_{};
  const std::function<void(std::size_t)> *job_{nullptr};
  std::size_t job_width_{0};
  std::size_t pending_{0};
  std::uint64_t generation_{0};
  bool stop_{false};
  std::exception_ptr error_{};
  std::mutex run_mu_{};
};

/// Run fn(0..n-1) on `pool` when given, otherwise serially on the caller.
inline void
RunOn(WorkerPool *pool, const std::size_t n, const std::function<void(std::size_t)> &fn)
{
  if (pool == nullptr || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  pool->Run(n, fn);
}

}  // namespace piskip
