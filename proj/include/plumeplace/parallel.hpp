#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <span>
#include <thread>
#include <vector>

namespace plumeplace {

namespace detail {
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{0};  // 0 = hardware concurrency
    return cap;
}
}  // namespace detail

/// Cap worker parallelism (0 restores the hardware default).
inline void set_max_threads(int t) { detail::thread_cap().store(t); }

inline int max_threads() {
    const int cap = detail::thread_cap().load();
    if (cap > 0) return cap;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Parallel map over [0, n). fn(i) must write only to state owned by index i;
/// results are then combined by the caller in index order, so the outcome is
/// independent of the thread count.
template <class F>
void parallel_for(std::size_t n, F&& fn, int threads_override = 0) {
    const int threads =
        std::min<std::size_t>(threads_override > 0 ? threads_override : max_threads(), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load(std::memory_order_relaxed)) return;
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads - 1));
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failed.load() && error) std::rethrow_exception(error);
}

/// Fixed-topology pairwise summation; deterministic for a given input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace plumeplace
