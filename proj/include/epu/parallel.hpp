#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace epu {

[[nodiscard]] inline unsigned resolve_threads(unsigned requested) {
    return requested ? requested : std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `fn(begin, end)` over contiguous chunks of [0, n). Chunks write to
/// disjoint outputs, so results never depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n, 1)));
    if (threads <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + threads - 1) / threads;
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
}

} // namespace epu
