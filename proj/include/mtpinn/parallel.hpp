#pragma once

// Fixed-partition task runner. Work is split into tasks whose boundaries do
// not depend on the worker count, and every task writes its own slot, so
// reductions done afterwards in task order are bit-identical for any
// --threads value.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace mtpinn {

/// Flush-to-zero / denormals-are-zero for the current thread while in scope.
/// Subnormal activations in float32 tapes otherwise slow training several
/// fold; every worker (and the caller) runs under the same mode, so results
/// stay independent of the thread count.
class ScopedFlushDenormals {
 public:
#if defined(__SSE__)
  ScopedFlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~ScopedFlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

/// Runs fn(task) for task in [0, n_tasks) on up to `threads` workers.
/// The first exception thrown by any task is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n_tasks, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n_tasks, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    ScopedFlushDenormals ftz;
    for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto loop = [&] {
    ScopedFlushDenormals ftz;
    for (std::size_t t; (t = next.fetch_add(1)) < n_tasks;) {
      try {
        fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(loop);
  loop();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Column ranges of at most `chunk` entries covering [0, n).
struct ChunkRange {
  std::ptrdiff_t begin = 0;
  std::ptrdiff_t size = 0;
};

inline std::vector<ChunkRange> make_chunks(std::ptrdiff_t n, std::ptrdiff_t chunk) {
  std::vector<ChunkRange> out;
  for (std::ptrdiff_t b = 0; b < n; b += chunk) out.push_back({b, std::min(chunk, n - b)});
  return out;
}

}  // namespace mtpinn
