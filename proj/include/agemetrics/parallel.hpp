#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace agemetrics {

/// Worker cap: AGE_METRICS_THREADS when set, hardware concurrency otherwise.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("AGE_METRICS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs f(i) for i in [0, n); results must be written to pre-sized slots so
/// the outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += workers) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace agemetrics
