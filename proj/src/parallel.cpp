#include "dbdt/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dbdt {

std::size_t worker_count() {
    if (const char* env = std::getenv("DBDT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) {
            return static_cast<std::size_t>(v);
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace dbdt
