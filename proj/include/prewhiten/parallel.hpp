#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace prewhiten {

/// Number of worker threads implied by a thread-count setting (0 = auto).
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Deterministic parallel map over [0, n): static contiguous chunks, one per
/// worker. Each index is processed exactly once and writes only to its own
/// output slot, so results do not depend on the thread count or scheduling.
template <typename Fn>
void parallel_for(std::size_t n, const Fn& fn, int threads = 0) {
    const int nt = std::min<std::size_t>(resolve_threads(threads), n == 0 ? 1 : n);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t chunk = (n + nt - 1) / nt;
    for (int w = 0; w < nt; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Chunked variant: fn(begin, end) is called on static contiguous ranges,
/// letting workers reuse per-range scratch buffers. Chunk boundaries depend
/// only on n and the resolved thread count, never on scheduling.
template <typename Fn>
void parallel_for_chunks(std::size_t n, const Fn& fn, int threads = 0) {
    const int nt = static_cast<int>(std::min<std::size_t>(resolve_threads(threads), n == 0 ? 1 : n));
    if (nt <= 1) {
        fn(static_cast<std::size_t>(0), n);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t chunk = (n + nt - 1) / nt;
    for (int w = 0; w < nt; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace prewhiten
