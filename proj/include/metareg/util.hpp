#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metareg {

/// Raised for malformed or inconsistent input data (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when model training cannot proceed (CLI exit code 3).
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised for invalid configuration or command usage (CLI exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Self-contained xoshiro256++ generator. Everything that needs randomness in
/// this library draws from one of these, so results do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in (lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller. Consumes uniforms in pairs.
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_int(std::uint64_t bound);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic per-task seed: mixes a base seed with a textual tag.
/// Stable across platforms and thread schedules.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// FNV-1a 64-bit hash, used for config fingerprints in manifests.
std::uint64_t fnv1a64(std::string_view bytes);

/// Runs fn(0..n-1) on up to `jobs` threads. Tasks must be independent;
/// the first exception thrown by any task is rethrown after all complete.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace metareg
