#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

// Internal helper shared by training and evaluation: a one-shot work
// queue over indices 0..n-1. Work items must be independent; callers own
// any ordering of the results, which keeps outputs identical for every
// thread count.

namespace deproj {

template <typename Fn>
void run_parallel(int n, int threads, Fn&& fn) {
    if (threads > n) threads = n;
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace deproj
