#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace textcausal {

inline unsigned worker_count() {
    if (const char* env = std::getenv("TEXTCAUSAL_THREADS")) {
        long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Runs fn(chunk_index, begin, end) over [0, n) split into chunks whose
// boundaries depend only on n, never on the number of workers.  Callers that
// reduce results must do so in chunk-index order so that output is identical
// for any thread count.
inline void parallel_chunks(std::size_t n,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                            std::size_t n_chunks = 64) {
    if (n == 0) return;
    n_chunks = std::min(n_chunks, n);
    const std::size_t base = n / n_chunks, rem = n % n_chunks;
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    spans.reserve(n_chunks);
    std::size_t at = 0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        std::size_t len = base + (c < rem ? 1 : 0);
        spans.emplace_back(at, at + len);
        at += len;
    }

    unsigned workers = std::min<std::size_t>(worker_count(), n_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c, spans[c].first, spans[c].second);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) {
                try {
                    fn(c, spans[c].first, spans[c].second);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    next.store(n_chunks);  // stop handing out work
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace textcausal
