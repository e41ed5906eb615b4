#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace revgen {

// Runs fn(item) over all items on up to `workers` threads. Items are claimed
// by atomic index, so completion order is arbitrary; callers must make their
// side effects order-independent (sort-at-stage-end discipline).
template <typename T, typename Fn>
void parallel_for_each(int workers, std::vector<T>& items, Fn fn) {
    if (items.empty()) return;
    std::size_t n_threads = static_cast<std::size_t>(workers) < items.size()
                                ? static_cast<std::size_t>(workers)
                                : items.size();
    if (n_threads <= 1) {
        for (T& item : items) fn(item);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= items.size()) return;
                fn(items[i]);
            }
        });
    }
    for (std::thread& t : pool) t.join();
}

}  // namespace revgen
