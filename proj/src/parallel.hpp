#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace proxflow::detail {

/// Splits [0, total) into contiguous chunks of at most `chunk` items and runs
/// fn(begin, count) on up to `threads` workers. Chunk boundaries depend only
/// on `chunk`, so results are independent of the thread count. The first
/// exception thrown by any chunk is rethrown.
template <class Fn>
void parallel_chunks(std::size_t total, std::size_t chunk, std::size_t threads, Fn&& fn) {
  if (total == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (total + chunk - 1) / chunk;
  threads = std::clamp<std::size_t>(threads, 1, chunks);
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c * chunk, std::min(chunk, total - c * chunk));
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += threads) {
        try {
          fn(c * chunk, std::min(chunk, total - c * chunk));
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace proxflow::detail
