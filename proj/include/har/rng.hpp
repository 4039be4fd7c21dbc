#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace har {

/// Deterministic random source. mt19937_64 is bit-exact by the standard;
/// the real-valued mappings below are spelled out explicitly so that the
/// stream never depends on the platform's distribution implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be > 0. Rejection-free modulo is
  /// acceptable here: n is always far below 2^64 so the bias is negligible
  /// and, more importantly, the result is reproducible.
  std::uint64_t next_below(std::uint64_t n) { return gen_() % n; }

  /// Standard normal via Box-Muller; both values of a pair are consumed
  /// in a fixed order.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = next_uniform();
    } while (u1 <= 0.0);
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates with the explicit index mapping above. std::shuffle is
/// implementation-defined, so it cannot back reproducible corpora.
template <typename T>
void shuffle(std::vector<T>& items, SeededRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace har
