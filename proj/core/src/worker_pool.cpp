#include "piskip/worker_pool.hpp"

namespace piskip
{
WorkerPool::WorkerPool(const std::size_t threads)
{
  if (threads > 1) Grow(threads - 1);
}

WorkerPool::~WorkerPool()
{
  {
    std::lock_guard lock{mu_};
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto &t : threads_) t.join();
}

auto
WorkerPool::size() const  //
    -> std::size_t
{
  std::lock_guard lock{mu_};
  return threads_.size() + 1;
}

void
WorkerPool::Grow(const std::size_t background)
{
  std::lock_guard lock{mu_};
  while (threads_.size() < background) {
    const auto id = threads_.size() + 1;
    threads_.emplace_back([this, id] { Loop(id); });
  }
}

void
WorkerPool::Run(const std::size_t n, const std::function<void(std::size_t)> &fn)
{
  if (n == 0) return;
  std::lock_guard run_lock{run_mu_};
  if (n > 1) Grow(n - 1);

  {
    std::lock_guard lock{mu_};
    job_ = &fn;
    job_width_ = n;
    pending_ = n - 1;
    error_ = nullptr;
    ++generation_;
  }
  start_cv_.notify_all();

  std::exception_ptr local{};
  try {
    fn(0);
  } catch (...) {
    local = std::current_exception();
  }

  std::unique_lock lock{mu_};
  done_cv_.wait(lock, [this] { return pending_ == 0; });
  job_ = nullptr;
  if (local != nullptr) std::rethrow_exception(local);
  if (error_ != nullptr) std::rethrow_exception(error_);
}

void
WorkerPool::Loop(const std::size_t id)
{
  std::uint64_t seen = 0;
  while (true) {
    const std::function<void(std::size_t)> *job = nullptr;
    {
      std::unique_lock lock{mu_};
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      if (id >= job_width_) continue;
      job = job_;
    }

    std::exception_ptr err{};
    try {
      (*job)(id);
    } catch (...) {
      err = std::current_exception();
    }

    std::lock_guard lock{mu_};
    if (err != nullptr && error_ == nullptr) error_ = err;
    if (--pending_ == 0) done_cv_.notify_all();
  }
}

}  // namespace piskip
