#include "robusto/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>
#include <vector>

namespace robusto {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) {
  if (n < 1) throw std::invalid_argument("thread count must be >= 1");
  g_threads.store(n);
}

int num_threads() { return g_threads.load(); }

void parallel_chunks(int n, const std::function<void(int, int, int)>& fn) {
  const int nt = std::min(num_threads(), std::max(1, n));
  if (nt == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  const int base = n / nt, rem = n % nt;
  int begin = 0;
  for (int c = 0; c < nt; ++c) {
    const int len = base + (c < rem ? 1 : 0);
    pool.emplace_back(fn, begin, begin + len, c);
    begin += len;
  }
  for (auto& t : pool) t.join();
}

}  // namespace robusto
