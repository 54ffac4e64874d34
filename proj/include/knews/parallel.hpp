#pragma once
// Static-partition parallel loop. Work is split into contiguous ranges by
// index so results never depend on scheduling; callers merge per-range
// outputs in range order when order matters.

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace knews {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// fn(begin, end, slot) over [0, n) split into at most `threads` ranges.
inline void parallel_for(int64_t n, int threads,
                         const std::function<void(int64_t, int64_t, int)>& fn) {
    if (n <= 0) return;
    threads = std::min<int64_t>(resolve_threads(threads), n);
    if (threads <= 1) {
        fn(0, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mu;
    const int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int64_t lo = t * chunk;
        const int64_t hi = std::min<int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi, t] {
            try {
                fn(lo, hi, t);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace knews
