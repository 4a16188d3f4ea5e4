#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qpising {

// Worker cap: QPISING_WORKERS if set and positive, else hardware concurrency.
int default_workers();
void set_worker_cap(int n);
int worker_cap();

// Runs f(i) for i in [0, n) on up to `workers` threads; results are stored by index, so the
// output order does not depend on scheduling. The first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& f) {
  int w = workers;
  if (w <= 0) w = worker_cap();
  if (w > worker_cap()) w = worker_cap();
  if (w <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(w), n);
  for (std::size_t t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, int workers, F&& f) {
  std::vector<T> out(n);
  parallel_for(n, workers, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

}  // namespace qpising
