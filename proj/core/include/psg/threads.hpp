#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace psg {

/// Run fn(i) for i in [0, count). With threads <= 1 the loop is serial;
/// otherwise indices are striped across worker threads. Callers own
/// determinism: writes must go to disjoint, index-addressed slots so the
/// result is identical for any thread count.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// Default worker count: PSG_THREADS env var, else 1.
inline std::size_t default_threads() {
    if (const char* env = std::getenv("PSG_THREADS")) {
        const long v = std::atol(env);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

} // namespace psg
