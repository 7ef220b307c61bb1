#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace dsr {

// Deterministic RNG: a mt19937_64 engine with hand-rolled variate mappings.
// The standard <random> distributions are implementation-defined, so uniform,
// normal and shuffle draws are derived here by hand; identical seeds give
// identical streams on every toolchain.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). n must be >= 1.
  uint64_t below(uint64_t n) { return engine_() % n; }

  // Uniform real in [0, 1) with 53 random bits.
  double real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * real(); }

  // Standard normal via the Marsaglia polar method; one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * real() - 1.0;
      v = 2.0 * real() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double k = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * k;
    has_spare_ = true;
    return u * k;
  }

  // In-place Fisher-Yates with a fixed draw order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dsr
