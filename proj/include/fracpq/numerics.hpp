#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

namespace fracpq {

/// Neumaier (improved Kahan) accumulator. p-th powers of small nodal
/// differences span many orders of magnitude, so every discrete sum in the
/// library goes through this.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

/// ||r||_2 / sqrt(len(r)); the residual scale used by all solvers.
inline double scaled_norm(std::span<const double> r) {
  if (r.empty()) return 0.0;
  CompensatedSum s;
  for (double x : r) s.add(x * x);
  return std::sqrt(s.value() / static_cast<double>(r.size()));
}

inline double max_abs(std::span<const double> r) {
  double m = 0.0;
  for (double x : r) m = std::max(m, std::abs(x));
  return m;
}

/// |x|^{p-2} x, with the p < 2 singularity at 0 resolved to 0.
inline double signed_pow(double x, double p) {
  if (x == 0.0) return 0.0;
  const double a = std::abs(x);
  return std::copysign(std::pow(a, p - 1.0), x);
}

// ---------------------------------------------------------------------------
// Thread cap shared by the parallel kernels (`--threads n`).

inline std::atomic<unsigned>& thread_cap_storage() {
  static std::atomic<unsigned> cap{0};
  return cap;
}

inline void set_thread_count(unsigned n) { thread_cap_storage().store(n); }

inline unsigned thread_count() {
  unsigned n = thread_cap_storage().load();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks so that
/// a given thread count always produces the same per-index results.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(thread_count(), std::max<std::size_t>(1, n / 64)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
}

// ---------------------------------------------------------------------------
// Portable random numbers: std::uniform_real_distribution is
// implementation-defined, so seeded runs map engine output by hand.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}

  std::uint64_t next() noexcept {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

}  // namespace fracpq
