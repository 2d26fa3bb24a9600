#ifndef QVI_PARALLEL_HPP
#define QVI_PARALLEL_HPP

// Static-chunk parallel loop. Every index writes only its own output slot, so
// results are byte-identical at any worker count.

#include <algorithm>
#include <thread>
#include <vector>

namespace qvi {

template <typename F>
void parallel_for(int n, int threads, F&& body) {
    threads = std::max(1, threads);
    if (threads == 1 || n < 2 * threads) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    int chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads - 1));
    for (int w = 1; w < threads; ++w) {
        int lo = w * chunk;
        int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (int i = lo; i < hi; ++i) body(i);
        });
    }
    for (int i = 0; i < std::min(chunk, n); ++i) body(i);
    for (auto& th : pool) th.join();
}

}  // namespace qvi

#endif
