#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace qv {

// Persistent worker pool behind parallel_for. Work is split into fixed chunks
// whose index->range mapping does not depend on the number of threads, so any
// computation whose chunks write disjoint outputs is bit-reproducible for
// every pool size.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    void set_thread_count(int n) {
        std::lock_guard<std::mutex> lk(api_mutex_);
        if (n < 1) n = 1;
        if (n == threads_requested_.load(std::memory_order_relaxed)) return;
        stop_workers();
        threads_requested_.store(n, std::memory_order_relaxed);
    }

    // Lock-free so chunk-size heuristics may call it from inside a job.
    int thread_count() const { return threads_requested_.load(std::memory_order_relaxed); }

    // Runs fn(lo, hi) over [begin, end) split into chunks of chunk_size.
    // Blocks until every chunk completed; rethrows the first worker exception.
    // Nested calls from inside a pool job run inline: the outer job already
    // owns the workers.
    void run(int64_t begin, int64_t end, int64_t chunk_size,
             const std::function<void(int64_t, int64_t)>& fn) {
        if (end <= begin) return;
        if (inside_job()) {
            fn(begin, end);
            return;
        }
        std::lock_guard<std::mutex> lk(api_mutex_);
        if (threads_requested_.load(std::memory_order_relaxed) == 1) {
            fn(begin, end);
            return;
        }
        start_workers();

        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->begin = begin;
        job->end = end;
        job->chunk = chunk_size < 1 ? 1 : chunk_size;
        job->chunks = (end - begin + job->chunk - 1) / job->chunk;
        job->pending.store(job->chunks, std::memory_order_relaxed);

        {
            std::lock_guard<std::mutex> jl(job_mutex_);
            current_job_ = job;
            ++job_generation_;
        }
        job_cv_.notify_all();

        execute(*job);  // calling thread participates

        {
            std::unique_lock<std::mutex> jl(job_mutex_);
            done_cv_.wait(jl, [&] { return job->pending.load(std::memory_order_acquire) == 0; });
            if (current_job_ == job) current_job_.reset();
        }
        if (job->error) std::rethrow_exception(job->error);
    }

    ~ThreadPool() { stop_workers(); }

private:
    // Per-job state; stale workers that wake late operate on their own
    // shared_ptr copy and can never claim chunks of a newer job.
    struct Job {
        const std::function<void(int64_t, int64_t)>* fn = nullptr;
        int64_t begin = 0, end = 0, chunk = 1, chunks = 0;
        std::atomic<int64_t> next{0};
        std::atomic<int64_t> pending{0};
        std::mutex error_mutex;
        std::exception_ptr error;
    };

    ThreadPool() : threads_requested_(default_threads()) {}

    static int default_threads() {
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }

    void start_workers() {
        if (!workers_.empty()) return;
        stopping_ = false;
        // calling thread is worker zero
        const int extra = threads_requested_.load(std::memory_order_relaxed) - 1;
        for (int i = 0; i < extra; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> jl(job_mutex_);
            stopping_ = true;
        }
        job_cv_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
        stopping_ = false;
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> jl(job_mutex_);
                job_cv_.wait(jl, [&] { return stopping_ || job_generation_ != seen; });
                if (stopping_) return;
                seen = job_generation_;
                job = current_job_;
            }
            if (job) execute(*job);
        }
    }

    static bool& inside_job() {
        thread_local bool flag = false;
        return flag;
    }

    void execute(Job& job) {
        inside_job() = true;
        for (;;) {
            const int64_t c = job.next.fetch_add(1, std::memory_order_relaxed);
            if (c >= job.chunks) break;  // fn is guaranteed alive while chunks remain
            const int64_t lo = job.begin + c * job.chunk;
            const int64_t hi = std::min(job.end, lo + job.chunk);
            try {
                (*job.fn)(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> el(job.error_mutex);
                if (!job.error) job.error = std::current_exception();
            }
            if (job.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                { std::lock_guard<std::mutex> jl(job_mutex_); }
                done_cv_.notify_all();
            }
        }
        inside_job() = false;
    }

    std::mutex api_mutex_;
    std::atomic<int> threads_requested_;
    std::vector<std::thread> workers_;

    std::mutex job_mutex_;
    std::condition_variable job_cv_;
    std::condition_variable done_cv_;
    bool stopping_ = false;
    uint64_t job_generation_ = 0;
    std::shared_ptr<Job> current_job_;
};

inline void set_thread_count(int n) { ThreadPool::instance().set_thread_count(n); }
inline int thread_count() { return ThreadPool::instance().thread_count(); }

// fn(i) per index; chunking is index-based so results never depend on the
// thread count.
template <typename Fn>
void parallel_for(int64_t begin, int64_t end, Fn&& fn, int64_t chunk_size = 0) {
    if (end <= begin) return;
    if (chunk_size <= 0) {
        const int64_t target = static_cast<int64_t>(thread_count()) * 8;
        chunk_size = std::max<int64_t>(1, (end - begin + target - 1) / target);
    }
    const std::function<void(int64_t, int64_t)> body = [&fn](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) fn(i);
    };
    ThreadPool::instance().run(begin, end, chunk_size, body);
}

}  // namespace qv
