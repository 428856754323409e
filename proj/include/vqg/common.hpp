#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace vqg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. The CLI maps it to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or configuration. The CLI maps it to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Derives an independent seed for a named random stream, e.g.
/// derive_seed(seed, "split"). Streams with different names are decorrelated.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Portable random source. The engine is std::mt19937_64, which the standard
/// pins down exactly; the conversions below are written out so that results
/// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Standard normal deviate (Box-Muller, cached pair).
  double normal();

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      using std::swap;
      swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vqg
