// Persistent worker pool behind parallel_for. Chunk claims happen under the
// pool mutex and are tied to a job generation, so late-waking workers can
// never claim or account work that is not theirs; bodies run outside the
// lock. The calling thread works alongside the pool.

#include "actionkit/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace actionkit::detail {

namespace {

class WorkerPool {
 public:
  static WorkerPool& instance() {
    static WorkerPool pool(static_cast<int>(std::thread::hardware_concurrency()) - 1);
    return pool;
  }

  void run(std::size_t n, std::size_t chunk,
           const std::function<void(std::size_t, std::size_t)>& body) {
    std::uint64_t gen;
    {
      std::unique_lock<std::mutex> lk(mu_);
      body_ = &body;
      n_ = n;
      chunk_ = chunk;
      next_ = 0;
      pending_ = (n + chunk - 1) / chunk;
      err_ = nullptr;
      gen = ++generation_;
      work_cv_.notify_all();
    }
    work(gen);  // caller participates
    std::exception_ptr err;
    {
      std::unique_lock<std::mutex> lk(mu_);
      done_cv_.wait(lk, [&] { return pending_ == 0; });
      body_ = nullptr;
      err = err_;
    }
    if (err) std::rethrow_exception(err);
  }

  ~WorkerPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
      work_cv_.notify_all();
    }
    for (std::thread& t : threads_) t.join();
  }

 private:
  explicit WorkerPool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void work(std::uint64_t gen) {
    for (;;) {
      std::size_t begin, end;
      const std::function<void(std::size_t, std::size_t)>* body;
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (gen != generation_ || next_ >= n_) return;
        begin = next_;
        end = std::min(n_, begin + chunk_);
        next_ = end;
        body = body_;
      }
      try {
        (*body)(begin, end);
      } catch (...) {
        std::unique_lock<std::mutex> lk(mu_);
        if (!err_) err_ = std::current_exception();
      }
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::uint64_t gen;
      {
        std::unique_lock<std::mutex> lk(mu_);
        work_cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = gen = generation_;
      }
      work(gen);
    }
  }

  std::mutex mu_;
  std::condition_variable work_cv_, done_cv_;
  const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
  std::size_t n_ = 0;
  std::size_t chunk_ = 1;
  std::size_t next_ = 0;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  std::exception_ptr err_;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace

void parallel_run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(thread_budget()), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  WorkerPool::instance().run(n, chunk, body);
}

}  // namespace actionkit::detail
