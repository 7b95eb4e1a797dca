#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace glosskit {

// Fixed-size worker pool for data-parallel loops. Work is split into
// contiguous ranges and every element is processed in a fixed serial order
// within its range, so results are bit-identical for any thread count.
// One task runs at a time; nested calls are run inline by parallel_for().
class ThreadPool {
  public:
    explicit ThreadPool(int n_threads) : n_threads_(n_threads < 1 ? 1 : n_threads) {
        for (int t = 1; t < n_threads_; ++t) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mutex_);
            stopping_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    int size() const noexcept { return n_threads_; }

    // fn(begin, end) is invoked on disjoint ranges covering [0, n).
    // Concurrent submissions are serialized; one task runs at a time.
    void parallel_for(long n, const std::function<void(long, long)>& fn) {
        if (n <= 0) return;
        std::lock_guard<std::mutex> submit_lock(submit_mutex_);
        std::uint64_t my_gen = 0;
        {
            std::unique_lock<std::mutex> lock(mutex_);
            const long chunks = std::min<long>(n, n_threads_);
            task_ = &fn;
            task_n_ = n;
            task_step_ = (n + chunks - 1) / chunks;
            next_chunk_ = 0;
            pending_ = (n + task_step_ - 1) / task_step_;
            my_gen = ++generation_;
        }
        cv_.notify_all();
        run_chunks(my_gen);
        std::unique_lock<std::mutex> lock(mutex_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        task_ = nullptr;
    }

  private:
    // Claims ranges of the task tagged my_gen until none remain. The task
    // function stays alive for every claimed range: the submitting thread
    // cannot leave parallel_for() until pending_ reaches zero.
    void run_chunks(std::uint64_t my_gen) {
        for (;;) {
            const std::function<void(long, long)>* fn = nullptr;
            long begin = 0, end = 0;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                if (generation_ != my_gen || task_ == nullptr || next_chunk_ >= task_n_) return;
                begin = next_chunk_;
                next_chunk_ += task_step_;
                end = std::min(task_n_, begin + task_step_);
                fn = task_;
            }
            (*fn)(begin, end);
            {
                std::unique_lock<std::mutex> lock(mutex_);
                if (generation_ == my_gen && --pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        for (;;) {
            std::uint64_t my_gen = 0;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_.wait(lock, [this] {
                    return stopping_ || (task_ != nullptr && next_chunk_ < task_n_);
                });
                if (stopping_) return;
                my_gen = generation_;
            }
            run_chunks(my_gen);
        }
    }

    int n_threads_;
    std::vector<std::thread> workers_;
    std::mutex submit_mutex_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(long, long)>* task_ = nullptr;
    long task_n_ = 0;
    long task_step_ = 0;
    long next_chunk_ = 0;
    long pending_ = 0;
    bool stopping_ = false;
    std::uint64_t generation_ = 0;
};

// Thread count resolution order: set_thread_count() > GLOSSKIT_THREADS >
// hardware concurrency (capped at 8).
int resolved_thread_count();
void set_thread_count(int n);
ThreadPool& global_pool();

// Splits [0, n) across the pool when the estimated work is large enough to
// pay for the dispatch; runs inline otherwise (and always when nested).
void parallel_for(long n, long flops_per_item, const std::function<void(long, long)>& fn);

} // namespace glosskit
