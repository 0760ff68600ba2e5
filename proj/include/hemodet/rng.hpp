#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hemodet {

/// Deterministic splittable random stream (splitmix64 core, Box-Muller
/// normals). Child streams are keyed off the parent's construction seed, not
/// its current state, so adding a consumer never shifts another one's draws.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : root_(seed), state_(mix(seed + 0x9e3779b97f4a7c15ull)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  long uniform_int(long n) { return static_cast<long>(next_u64() % static_cast<uint64_t>(n)); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  RngStream split(std::string_view key) const {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the key
    for (char ch : key) {
      h ^= static_cast<uint8_t>(ch);
      h *= 0x100000001b3ull;
    }
    return RngStream(mix(root_ ^ h));
  }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t root_;
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hemodet
