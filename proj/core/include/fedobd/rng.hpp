#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace fedobd {

/// Seeded random stream with platform-stable distributions.
///
/// The engine is std::mt19937_64 (its output sequence is fixed by the
/// standard); the distributions below are written out by hand because the
/// std:: distributions are implementation-defined and would make runs differ
/// between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Substream for one (purpose, round, sender) triple of a run seeded with `root`.
  static Rng derive(std::uint64_t root, std::string_view purpose, std::uint64_t round,
                    std::string_view sender);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (one value per call, the pair partner is discarded).
  double normal();

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to mix labels into seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace fedobd
