#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace regrel {

/// Runs fn(i) for i in [0, count) on at most `in_flight` threads. Each index is
/// processed exactly once. The first exception thrown is rethrown after all
/// workers have stopped.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t in_flight, Fn&& fn)
{
    if (count == 0) {
        return;
    }
    in_flight = std::clamp<std::size_t>(in_flight, 1, count);
    if (in_flight == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> workers;
        workers.reserve(in_flight);
        for (std::size_t w = 0; w < in_flight; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    auto i = next.fetch_add(1);
                    if (i >= count) {
                        return;
                    }
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                        next.store(count);
                        return;
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace regrel
