#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace seqstage {

/// Derives an independent 64-bit seed for one replication. splitmix64 is
/// applied to the replication index, xored into the master seed, and
/// mixed again, so substreams never depend on evaluation order.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t replication_seed(std::uint64_t master, std::uint64_t replication) noexcept {
  return splitmix64(master ^ splitmix64(replication));
}

/// Runs fn(i) for i in [0, count) on `workers` threads. Each index is
/// handled exactly once; callers write into slot i and reduce afterwards
/// in index order, which keeps results independent of the worker count.
template <class Fn>
void parallel_for(std::int64_t count, int workers, Fn&& fn) {
  workers = std::max(1, workers);
  if (workers == 1 || count < 2) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const auto w = static_cast<std::int64_t>(std::min<std::int64_t>(workers, count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(w));
  for (std::int64_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      const std::int64_t lo = count * t / w;
      const std::int64_t hi = count * (t + 1) / w;
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace seqstage
