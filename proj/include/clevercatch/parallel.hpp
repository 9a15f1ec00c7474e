// clevercatch/parallel.hpp
// Index-partitioned parallel loop capped by CLEVERCATCH_THREADS.
#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace clevercatch {

// Worker cap: CLEVERCATCH_THREADS if set to a positive integer, else hardware concurrency.
inline unsigned thread_cap() {
    if (const char* env = std::getenv("CLEVERCATCH_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Calls fn(i) for i in [0, n). Each index is handled by exactly one worker, so
// results written to slot i are independent of the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 64) {
    const std::size_t workers =
        std::min<std::size_t>(thread_cap(), std::max<std::size_t>(1, n / std::max<std::size_t>(min_chunk, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace clevercatch
