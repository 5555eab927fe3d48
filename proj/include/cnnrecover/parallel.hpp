#pragma once

// Deterministic chunked reductions over sample ranges.
//
// The range [0, n) is cut into fixed-size chunks independent of the thread count.
// Each chunk is accumulated serially in index order and chunk partials are combined
// with a fixed pairwise tree, so the result is bitwise identical for any number of
// worker threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace cnnrecover {

inline constexpr std::size_t kReductionChunk = 2048;

inline std::atomic<int>& worker_threads() {
  static std::atomic<int> threads{1};
  return threads;
}

/// Number of worker threads used by chunked reductions (values < 1 mean 1).
inline void set_worker_threads(int n) { worker_threads().store(std::max(1, n)); }

/// `accumulate(begin, end, acc)` adds the contributions of samples [begin, end) into acc;
/// `zero()` creates an empty accumulator; accumulators must support `a += b`.
template <class Zero, class Accumulate>
auto chunked_reduce(std::size_t n, Zero&& zero, Accumulate&& accumulate) {
  using Acc = decltype(zero());
  const std::size_t chunks = n == 0 ? 0 : (n + kReductionChunk - 1) / kReductionChunk;
  if (chunks == 0) return zero();
  std::vector<Acc> partial;
  partial.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) partial.push_back(zero());

  auto run = [&](std::size_t c) {
    const std::size_t begin = c * kReductionChunk;
    accumulate(begin, std::min(n, begin + kReductionChunk), partial[c]);
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(worker_threads().load()), chunks);
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < chunks; c = next++) run(c);
      });
  }
  for (std::size_t stride = 1; stride < chunks; stride *= 2)
    for (std::size_t c = 0; c + stride < chunks; c += 2 * stride) partial[c] += partial[c + stride];
  return std::move(partial.front());
}

}  // namespace cnnrecover
