// Minimal data-parallel loop for per-pixel work.
//
// Only used for loops whose iterations write disjoint outputs; reductions
// stay sequential so results do not depend on the thread count.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace bias_obs {

/// Thread cap from BIAS_OBS_THREADS (default: hardware concurrency).
inline unsigned thread_count() {
    static const unsigned count = [] {
        unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("BIAS_OBS_THREADS")) {
            try {
                const long v = std::stol(env);
                if (v >= 1) return static_cast<unsigned>(std::min<long>(v, 256));
            } catch (...) {
            }
        }
        return hw;
    }();
    return count;
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned threads = thread_count();
    constexpr std::size_t kMinChunk = 4096;
    if (threads <= 1 || n < 2 * kMinChunk) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n / kMinChunk);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t k = lo; k < hi; ++k) fn(k);
        });
    }
    for (std::size_t k = 0; k < std::min(n, chunk); ++k) fn(k);
    for (auto& t : pool) t.join();
}

} // namespace bias_obs
