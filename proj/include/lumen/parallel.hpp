#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lumen {

// Worker-count resolution: explicit request > LUMEN_THREADS env > hardware.
inline int resolve_thread_count(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("LUMEN_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Persistent worker pool. Threads are spawned once and reused; spawning per
// parallel region is far too slow on sandboxed kernels. Jobs must not launch
// nested jobs.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    // Runs fn(worker_index) on `workers` logical workers; the caller acts as
    // worker 0.
    void run(int workers, const std::function<void(int)>& fn) {
        if (workers <= 1) {
            fn(0);
            return;
        }
        std::unique_lock<std::mutex> lk(mu_);
        ensure_locked(workers - 1);
        job_ = &fn;
        active_ = workers - 1;
        remaining_ = workers - 1;
        ++generation_;
        lk.unlock();
        cv_.notify_all();
        fn(0);
        lk.lock();
        done_cv_.wait(lk, [&] { return remaining_ == 0; });
        job_ = nullptr;
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

private:
    void ensure_locked(int n) {
        while (static_cast<int>(threads_.size()) < n) {
            int id = static_cast<int>(threads_.size()) + 1;
            threads_.emplace_back([this, id] { worker_loop(id); });
        }
    }

    void worker_loop(int id) {
        uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(mu_);
            cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            bool participate = id <= active_;
            const std::function<void(int)>* job = job_;
            lk.unlock();
            if (participate && job) {
                (*job)(id);
                lk.lock();
                if (--remaining_ == 0) done_cv_.notify_one();
            }
        }
    }

    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> threads_;
    const std::function<void(int)>* job_ = nullptr;
    uint64_t generation_ = 0;
    int active_ = 0;
    int remaining_ = 0;
    bool stop_ = false;
};

// Runs fn(begin, end, chunk_index) over [0, n) split into fixed-size chunks
// handed out by an atomic counter. Chunk boundaries depend only on n and
// chunk, never on the number of workers, so per-chunk results can be reduced
// in chunk order to get thread-count-independent sums.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, int threads, Fn&& fn) {
    if (n == 0) return;
    std::size_t n_chunks = (n + chunk - 1) / chunk;
    int workers = static_cast<int>(std::min<std::size_t>(std::max(threads, 1), n_chunks));
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            fn(c * chunk, std::min(n, (c + 1) * chunk), c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::function<void(int)> job = [&](int) {
        for (;;) {
            std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= n_chunks) return;
            fn(c * chunk, std::min(n, (c + 1) * chunk), c);
        }
    };
    ThreadPool::instance().run(workers, job);
}

// Convenience for element-wise loops without ordered reduction needs.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::size_t chunk = std::max<std::size_t>(1, n / (16 * std::max(threads, 1)));
    parallel_chunks(n, chunk, threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

} // namespace lumen
