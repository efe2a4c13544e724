#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace esnlab {

/// Runs fn(0..n-1) over `workers` threads (0 = hardware concurrency).
/// The caller owns result placement by index, so merged output is
/// independent of the worker count and completion order.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    int w = workers > 0 ? workers
                        : static_cast<int>(std::thread::hardware_concurrency());
    if (w < 1) w = 1;
    w = std::min(w, n);
    if (w == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&]() {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace esnlab
