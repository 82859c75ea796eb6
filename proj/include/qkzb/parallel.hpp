#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace qkzb {

// QKZB_THREADS caps the worker count; unset or invalid means hardware concurrency.
inline int thread_count()
{
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("QKZB_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) return std::min(v, hw);
        } catch (...) {
        }
    }
    return hw;
}

namespace detail {
inline thread_local bool in_parallel = false;
}

// Runs f(i) for i in [0, n). Results must be written to per-index slots by f so the reduction
// order stays fixed. Nested calls run serially. The lowest-index exception is rethrown.
template <class F>
void parallel_for(std::size_t n, F&& f)
{
    const int threads = detail::in_parallel ? 1 : std::min<int>(thread_count(), static_cast<int>(n));
    std::vector<std::exception_ptr> errs(n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                f(i);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            detail::in_parallel = true;
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    f(i);
                } catch (...) {
                    errs[i] = std::current_exception();
                }
            }
            detail::in_parallel = false;
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

} // namespace qkzb
