#pragma once

// Thread helper for kernels that partition work over independent output slots.
// Every output element is written by exactly one chunk and inner reductions run
// in a fixed order, so results are bitwise identical for any thread count.
// ALTO_THREADS caps the worker count (0 or unset = hardware concurrency).

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace alto {

inline std::size_t max_threads() {
  static const std::size_t cached = [] {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("ALTO_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v > 0) return std::min<std::size_t>(hw, static_cast<std::size_t>(v));
    }
    return hw;
  }();
  return cached;
}

// Runs fn(begin, end) over disjoint chunks of [0, n). `grain` is the minimum
// work per thread; small ranges stay on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, std::size_t grain, Fn&& fn) {
  if (n == 0) return;
  std::size_t workers = std::min(max_threads(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, grain)));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::size_t begin = chunk;
  for (std::size_t w = 1; w < workers && begin < n; ++w, begin += chunk) {
    pool.emplace_back([&fn, begin, end = std::min(n, begin + chunk)] { fn(begin, end); });
  }
  fn(std::size_t{0}, std::min(chunk, n));
  for (auto& t : pool) t.join();
}

}  // namespace alto
