#pragma once

// Deterministic chunked parallelism.
//
// Work is split into a fixed number of chunks whose boundaries depend only on
// the problem size. Workers pull chunk indices from a shared counter and write
// each chunk's result into its own slot; results are then folded strictly in
// chunk order. The thread count therefore changes wall-clock time only, never
// the floating-point result.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace conclab {

namespace detail {
inline std::atomic<unsigned>& thread_limit() {
  static std::atomic<unsigned> limit{0};
  return limit;
}
}  // namespace detail

/// Caps the number of worker threads. Zero restores the hardware default.
inline void set_thread_count(unsigned k) { detail::thread_limit().store(k); }

inline unsigned thread_count() {
  unsigned k = detail::thread_limit().load();
  if (k == 0) k = std::max(1u, std::thread::hardware_concurrency());
  return k;
}

/// Runs fn(chunk) for chunk in [0, num_chunks) and returns the results indexed
/// by chunk. The first exception thrown by any chunk is rethrown.
template <class T, class Fn>
std::vector<T> map_chunks(std::size_t num_chunks, Fn&& fn) {
  std::vector<T> out(num_chunks);
  if (num_chunks == 0) return out;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), num_chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < num_chunks; ++c) out[c] = fn(c);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= num_chunks) return;
      try {
        out[c] = fn(c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(num_chunks);
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

/// Neumaier-compensated accumulator; order-sensitive like any float sum, but
/// with error independent of the number of terms to first order.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace conclab
