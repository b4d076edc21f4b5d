#pragma once

// Reproducible sampling: every trial gets its own engine keyed by (seed, trial),
// so results do not depend on thread count or evaluation order.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fr/core.hpp"

namespace fr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 trial_engine(std::uint64_t seed, std::uint64_t trial) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(trial + 0x632be59bd9b4e019ULL)));
}

// Inverse-CDF sampler over a measure's weight vector.
class MeasureSampler {
 public:
  explicit MeasureSampler(const DiscreteMeasure& mu) : cdf_(mu.size()) {
    double s = 0.0;
    for (std::size_t a = 0; a < mu.size(); ++a) {
      s += mu[a];
      cdf_[a] = s;
    }
    // last element with positive weight absorbs the rounding tail
    last_ = 0;
    for (std::size_t a = 0; a < mu.size(); ++a)
      if (mu[a] > 0.0) last_ = a;
  }

  template <typename Engine>
  Index operator()(Engine& eng) const {
    std::uniform_real_distribution<double> u(0.0, cdf_.back());
    const double x = u(eng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
    const auto a = static_cast<Index>(it - cdf_.begin());
    return std::min(a, last_);
  }

  template <typename Engine>
  std::vector<Index> tuple(Engine& eng, std::size_t n) const {
    std::vector<Index> t(n);
    for (auto& a : t) a = (*this)(eng);
    return t;
  }

 private:
  std::vector<double> cdf_;
  Index last_ = 0;
};

// Worker count: FR_THREADS if set, else hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("FR_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1u : hc;
}

// Runs body(i) for i in [0, n) on up to thread_count() threads.
// body must only write to slot i of caller-owned storage.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fr
