#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qaparse {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
///
/// Work items are claimed dynamically, so callers must write results into
/// per-index slots and merge afterwards. The first exception thrown by any
/// item is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn)
{
    const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
        body();
    }
    if (failure) std::rethrow_exception(failure);
}

} // namespace qaparse
