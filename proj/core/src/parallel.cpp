#include "affect/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace affect {

namespace {

std::size_t threads_from_env() {
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("AFFECT_NUM_THREADS")) {
    try {
      auto n = std::stoul(env);
      if (n >= 1) return std::min<std::size_t>(n, hw);
    } catch (...) {
    }
  }
  return hw;
}

std::atomic<std::size_t> g_threads{threads_from_env()};

// Below this many multiply-adds a chunk is not worth a thread.
constexpr std::size_t kMinWorkPerThread = 1 << 16;

}  // namespace

std::size_t max_threads() { return g_threads.load(); }
void set_max_threads(std::size_t n) { g_threads.store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, std::size_t cost_per_item,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t by_work = (n * std::max<std::size_t>(1, cost_per_item)) / kMinWorkPerThread;
  std::size_t workers = std::min({max_threads(), n, std::max<std::size_t>(1, by_work)});
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace affect
