#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fbsde {

/// Number of workers to use when the caller passes 0.
inline int default_workers()
{
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/*!
 * Run fn(begin, end) over a static partition of [0, count).
 *
 * The partition depends only on count and workers, and every index is
 * visited exactly once, so results that are written per index are
 * independent of the worker count. The first exception thrown by any
 * chunk (in chunk order) is rethrown on the calling thread.
 */
template<class F>
void parallel_for(std::size_t count, int workers, F&& fn)
{
    if (workers <= 0)
        workers = default_workers();
    std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    if (chunks <= 1)
    {
        if (count > 0)
            fn(std::size_t{0}, count);
        return;
    }

    std::vector<std::exception_ptr> errors(chunks);
    std::vector<std::thread> threads;
    threads.reserve(chunks - 1);
    auto run = [&](std::size_t c) {
        std::size_t begin = count * c / chunks;
        std::size_t end = count * (c + 1) / chunks;
        try
        {
            fn(begin, end);
        }
        catch (...)
        {
            errors[c] = std::current_exception();
        }
    };
    for (std::size_t c = 1; c < chunks; ++c)
        threads.emplace_back(run, c);
    run(0);
    for (auto& t : threads)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

}  // namespace fbsde
