#include "voxforge/common.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace voxforge {

namespace {
int g_threads = 0;  // 0 = unresolved

int resolve_threads() {
  if (const char* env = std::getenv("VOXFORGE_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}
}  // namespace

int num_threads() {
  if (g_threads == 0) g_threads = resolve_threads();
  return g_threads;
}

void set_num_threads(int n) { g_threads = n >= 1 ? n : 0; }

void parallel_for_chunks(std::size_t n, std::size_t chunk,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk == 0) chunk = 1;
  int nt = num_threads();
  std::size_t nchunks = (n + chunk - 1) / chunk;
  if (nt <= 1 || nchunks <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c)
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= nchunks) break;
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<std::size_t>(nt, nchunks) - 1;
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  // Chunk size balances scheduling overhead against load balance; results are
  // index-local so any chunking yields identical output.
  std::size_t chunk = std::max<std::size_t>(1, n / (4 * std::max(1, num_threads())));
  chunk = std::min<std::size_t>(chunk, 4096);
  parallel_for_chunks(n, chunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace voxforge
