#include "glosskit/threading.hpp"

#include <algorithm>
#include <memory>
#include <string>

namespace glosskit {

namespace {

int g_requested_threads = 0;
std::unique_ptr<ThreadPool> g_pool;
std::mutex g_pool_mutex;
thread_local bool g_inside_parallel_region = false;

int detect_threads() {
    if (g_requested_threads > 0) return g_requested_threads;
    if (const char* env = std::getenv("GLOSSKIT_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
}

} // namespace

int resolved_thread_count() { return detect_threads(); }

void set_thread_count(int n) {
    std::lock_guard<std::mutex> lock(g_pool_mutex);
    g_requested_threads = n;
    g_pool.reset();
}

ThreadPool& global_pool() {
    std::lock_guard<std::mutex> lock(g_pool_mutex);
    if (!g_pool) g_pool = std::make_unique<ThreadPool>(detect_threads());
    return *g_pool;
}

void parallel_for(long n, long flops_per_item, const std::function<void(long, long)>& fn) {
    if (n <= 0) return;
    // Nested regions run inline: the pool handles one task at a time.
    if (g_inside_parallel_region) {
        fn(0, n);
        return;
    }
    // Dispatch overhead is only worth paying for a few hundred microseconds
    // of arithmetic.
    const long total = n * std::max<long>(flops_per_item, 1);
    ThreadPool& pool = global_pool();
    if (pool.size() == 1 || total < 200000) {
        fn(0, n);
        return;
    }
    g_inside_parallel_region = true;
    auto wrapped = [&fn](long b, long e) {
        g_inside_parallel_region = true;
        fn(b, e);
    };
    pool.parallel_for(n, wrapped);
    g_inside_parallel_region = false;
}

} // namespace glosskit
