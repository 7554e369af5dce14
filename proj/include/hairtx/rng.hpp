#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace hairtx {

/// Seeded RNG with engine-level determinism: mt19937_64 plus hand-rolled
/// uniform/normal transforms, so streams are identical across standard
/// libraries (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0,1) with 53 bits of entropy.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(eng_() % static_cast<uint64_t>(hi_inclusive - lo + 1));
  }

  /// Standard normal via Box-Muller (cached pair).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a_u64(uint64_t v, uint64_t h = 0xcbf29ce484222325ull) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Per-job seed: mixes the config seed with the tuple id so batch jobs are
/// independent of scheduling order.
inline uint64_t job_seed(uint64_t config_seed, std::string_view tuple_id) {
  return fnv1a(tuple_id, fnv1a_u64(config_seed));
}

}  // namespace hairtx
