#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace pohedge {

// Worker count: explicit value if positive, else THREADS, else hardware.
inline int resolve_workers(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("THREADS")) {
        try {
            int v = std::stoi(env);
            if (v > 0) return v;
        } catch (...) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs body(i) for i in [0, n) on static contiguous blocks. Every index
// writes only its own slot, so results never depend on the worker count.
// If bodies throw, the exception of the lowest index is rethrown.
template <class Body>
void parallel_for(std::size_t n, Body&& body, int workers = 0) {
    if (n == 0) return;
    std::size_t w = static_cast<std::size_t>(resolve_workers(workers));
    if (w > n) w = n;
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> err(w);
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t k = 0; k < w; ++k) {
        std::size_t lo = n * k / w, hi = n * (k + 1) / w;
        pool.emplace_back([&, k, lo, hi] {
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    body(i);
                } catch (...) {
                    err[k] = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (std::size_t k = 0; k < w; ++k)
        if (err[k]) std::rethrow_exception(err[k]);
}

}  // namespace pohedge
