#include "stsan/threading.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stsan {

namespace {
int g_threads = 1;
}

void set_thread_count(int n) {
    g_threads = n < 1 ? 1 : n;
}

int thread_count() { return g_threads; }

void parallel_blocks(int blocks, const std::function<void(int)>& fn) {
    const int workers = g_threads < blocks ? g_threads : blocks;
    if (workers <= 1) {
        for (int b = 0; b < blocks; ++b) fn(b);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto body = [&] {
        for (;;) {
            const int b = next.fetch_add(1);
            if (b >= blocks) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace stsan
