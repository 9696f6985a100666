#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fsgfa {

/// Worker-thread cap from FSGFA_THREADS. Default is 1: single-threaded
/// execution is the correctness reference and what the test suite runs.
inline int thread_count() {
  static const int n = [] {
    const char* env = std::getenv("FSGFA_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    return std::clamp(v, 1, std::max(1, hw));
  }();
  return n;
}

namespace detail {

/// Persistent pool; spawning threads per call costs more than the work in
/// the many small batch-level loops. Index i always runs on participant
/// i % workers, so the work-to-thread mapping (and any per-thread partial
/// reduction order) is reproducible for a fixed FSGFA_THREADS.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool(thread_count() - 1);
    return pool;
  }

  void run(int n, int workers, const std::function<void(int, int)>& fn) {
    {
      std::lock_guard<std::mutex> lk(m_);
      fn_ = &fn;
      n_ = n;
      workers_ = workers;
      remaining_ = workers - 1;
      ++gen_;
    }
    cv_.notify_all();
    for (int i = 0; i < n; i += workers) fn(i, 0);
    std::unique_lock<std::mutex> lk(m_);
    done_.wait(lk, [this] { return remaining_ == 0; });
    fn_ = nullptr;
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
      ++gen_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

 private:
  explicit ThreadPool(int spare) {
    for (int t = 1; t <= spare; ++t) threads_.emplace_back([this, t] { worker(t); });
  }

  void worker(int id) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int, int)>* job = nullptr;
      int n = 0, workers = 0;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return stop_ || gen_ != seen; });
        seen = gen_;
        if (stop_) return;
        if (id >= workers_) continue;
        job = fn_;
        n = n_;
        workers = workers_;
      }
      for (int i = id; i < n; i += workers) (*job)(i, id);
      {
        std::lock_guard<std::mutex> lk(m_);
        if (--remaining_ == 0) done_.notify_one();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex m_;
  std::condition_variable cv_, done_;
  const std::function<void(int, int)>* fn_ = nullptr;
  int n_ = 0, workers_ = 0, remaining_ = 0;
  std::uint64_t gen_ = 0;
  bool stop_ = false;
};

}  // namespace detail

/// Static partition of [0, n) across the worker cap. Writes for distinct
/// indices must be disjoint (or reduced from per-thread partials afterwards
/// in thread-index order).
template <class F>
void parallel_for(int n, F&& fn) {
  const int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::function<void(int, int)> wrapped = std::forward<F>(fn);
  detail::ThreadPool::instance().run(n, workers, wrapped);
}

/// Reusable per-thread scratch memory (monotonically grown, never zeroed on
/// reuse); callers must fully overwrite the region they use.
template <class T>
T* scratch(int slot, std::size_t count) {
  thread_local std::vector<T> bufs[3];
  auto& b = bufs[slot];
  if (b.size() < count) b.resize(count);
  return b.data();
}

}  // namespace fsgfa
