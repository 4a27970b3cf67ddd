#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <iosfwd>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hetsgd/config.hpp"

namespace hetsgd::cli {

struct ExecuteOptions {
  std::optional<std::uint64_t> seed;  // replaces the config's seed list
  std::optional<std::string> out;     // replaces the output directory
  int threads = 0;                    // 0: hardware concurrency
  std::ostream* log = nullptr;        // human-readable progress, e.g. the verify table
};

/// Runs the experiment and writes its artifacts. Returns 0 iff every check passes.
int execute(const ExperimentConfig& cfg, const ExecuteOptions& opts = {});

/// CSV cell: 12 significant digits, "inf" for infinity.
std::string cell(double x);
std::string cell(TimePoint t);

int worker_count(int requested);

/// Calls fn(i) for i in [0, count) on a small pool. Results are stored by index,
/// so the output order never depends on scheduling.
template <class R, class F>
std::vector<R> parallel_map(std::size_t count, int threads, F fn) {
  std::vector<R> out(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(failure_lock);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  const int n = std::min<int>(worker_count(threads), static_cast<int>(count));
  if (n <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace hetsgd::cli
