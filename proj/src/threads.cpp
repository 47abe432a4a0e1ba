#include "tilq/threads.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace tilq {

int worker_count() {
    if (const char* env = std::getenv("TILQ_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_chunks(int64_t n_paths,
                     const std::function<void(int64_t, int64_t, int64_t)>& fn) {
    const int64_t n_chunks = (n_paths + kChunk - 1) / kChunk;
    const int workers = static_cast<int>(std::min<int64_t>(worker_count(), n_chunks));
    if (workers <= 1) {
        for (int64_t c = 0; c < n_chunks; ++c)
            fn(c, c * kChunk, std::min(n_paths, (c + 1) * kChunk));
        return;
    }
    std::atomic<int64_t> next{0};
    auto worker = [&]() {
        for (;;) {
            int64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            fn(c, c * kChunk, std::min(n_paths, (c + 1) * kChunk));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

}  // namespace tilq
