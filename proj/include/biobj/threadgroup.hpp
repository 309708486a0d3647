#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "biobj/core.hpp"

namespace biobj {

/// Half-open index range [begin, end) owned by one threadgroup.
struct Band {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

/// Splits [0, count) into `groups` contiguous bands. Band i starts at
/// i*floor(count/groups); the last band absorbs the remainder.
inline std::vector<Band> partition_bands(std::size_t count, int groups) {
    if (groups < 1) throw InvalidInput("group count must be >= 1");
    if (static_cast<std::size_t>(groups) > count)
        throw InvalidInput("more groups (" + std::to_string(groups) +
                           ") than items (" + std::to_string(count) + ")");
    const std::size_t base = count / static_cast<std::size_t>(groups);
    std::vector<Band> bands(static_cast<std::size_t>(groups));
    for (std::size_t i = 0; i < bands.size(); ++i) {
        bands[i].begin = i * base;
        bands[i].end = (i + 1 == bands.size()) ? count : (i + 1) * base;
    }
    return bands;
}

namespace detail {

class FirstError {
  public:
    void capture() {
        std::lock_guard lock(m_);
        if (!err_) err_ = std::current_exception();
    }
    void rethrow_if_set() {
        if (err_) std::rethrow_exception(err_);
    }

  private:
    std::mutex m_;
    std::exception_ptr err_;
};

}  // namespace detail

/// Runs g*t workers, one thread each; worker(group, member) sees its group
/// index and its index within the group. Returns once every worker joined,
/// which is the only synchronization point. The first worker exception is
/// rethrown after the join.
template <typename Worker>
void run_threadgroups(int groups, int threads_per_group, Worker&& worker) {
    if (groups < 1 || threads_per_group < 1)
        throw InvalidInput("threadgroup launch needs groups >= 1 and threads >= 1");
    detail::FirstError err;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(groups) * threads_per_group);
    for (int g = 0; g < groups; ++g)
        for (int t = 0; t < threads_per_group; ++t)
            pool.emplace_back([&worker, &err, g, t] {
                try {
                    worker(g, t);
                } catch (...) {
                    err.capture();
                }
            });
    for (auto& th : pool) th.join();
    err.rethrow_if_set();
}

/// Flat pool of `nthreads` workers indexed 0..nthreads-1.
template <typename Worker>
void run_flat_pool(int nthreads, Worker&& worker) {
    run_threadgroups(nthreads, 1, [&worker](int g, int) { worker(g); });
}

}  // namespace biobj
