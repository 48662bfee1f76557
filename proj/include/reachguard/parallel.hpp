#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace reachguard {

/// Process-wide worker count used by the node loops. 0 means hardware concurrency.
inline std::atomic<unsigned>& worker_count() {
    static std::atomic<unsigned> jobs{0};
    return jobs;
}

inline unsigned effective_workers() {
    unsigned j = worker_count().load();
    if (j == 0) j = std::max(1u, std::thread::hardware_concurrency());
    return j;
}

/// Calls fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint,
/// so results are independent of the worker count.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn) {
    const unsigned workers = effective_workers();
    if (workers <= 1 || n < 4096) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
}

}  // namespace reachguard
