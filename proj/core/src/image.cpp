// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "sparseview/common.hpp"

namespace sparseview {

Rng Rng::keyed(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2,
               std::uint64_t k3) {
  // splitmix64 fold of the key tuple into one seed
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t s = mix(seed);
  s = mix(s ^ k1);
  s = mix(s ^ k2);
  s = mix(s ^ k3);
  return Rng(s);
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SPARSEVIEW_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 4;
}

void parallel_chunks(std::int64_t n, int threads,
                     const std::function<void(std::int64_t, std::int64_t, int)>& chunk_fn) {
  if (n <= 0) return;
  const int t = static_cast<int>(std::max<std::int64_t>(
      1, std::min<std::int64_t>(threads, n)));
  if (t == 1) {
    chunk_fn(0, n, 0);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(t);
  const std::int64_t base = n / t;
  const std::int64_t rem = n % t;
  std::int64_t begin = 0;
  for (int i = 0; i < t; ++i) {
    const std::int64_t len = base + (i < rem ? 1 : 0);
    const std::int64_t end = begin + len;
    workers.emplace_back([=, &chunk_fn] { chunk_fn(begin, end, i); });
    begin = end;
  }
  for (auto& w : workers) w.join();
}

ImageU8 to_u8(const ImageD& img) {
  ImageU8 out(img.width(), img.height(), img.channels());
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    out.data()[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

ImageD from_u8(const ImageU8& img) {
  ImageD out(img.width(), img.height(), img.channels());
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    out.data()[i] = img.data()[i] / 255.0;
  }
  return out;
}

ImageD luma(const ImageD& img) {
  if (img.channels() == 1) return img;
  ImageD out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                     0.114 * img.at(x, y, 2);
    }
  }
  return out;
}

}  // namespace sparseview
