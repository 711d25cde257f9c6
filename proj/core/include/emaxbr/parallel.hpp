#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace emaxbr {

/// Worker count: `requested` when nonzero, otherwise the hardware
/// concurrency. Either way capped by EMAXBR_THREADS when that is set.
std::size_t resolve_threads(std::size_t requested = 0);

/// Calls fn(i) for i in [0, n). Callers store results by index, so output
/// never depends on scheduling. The first exception thrown is rethrown.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
    threads = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(n, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace emaxbr
