// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace sparseview {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Deterministic RNG. Wraps std::mt19937_64 (whose sequence is fully
/// specified by the standard) and draws values without going through the
/// implementation-defined std distributions, so identical seeds produce
/// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream keyed by (seed, k1, k2, k3), e.g. per (view, pixel).
  static Rng keyed(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                   std::uint64_t k3 = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// Number of worker threads: explicit argument if > 0, else the
/// SPARSEVIEW_THREADS environment variable, else 4.
int resolve_thread_count(int requested = 0);

/// Runs chunk_fn(begin, end, thread_index) over [0, n) split into contiguous
/// chunks, one per thread. With threads <= 1 runs inline. Chunk boundaries
/// depend only on (n, threads), so reductions merged in thread order are
/// deterministic for a fixed thread count.
void parallel_chunks(std::int64_t n, int threads,
                     const std::function<void(std::int64_t, std::int64_t, int)>& chunk_fn);

}  // namespace sparseview
