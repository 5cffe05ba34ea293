#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgan {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes, bad ranks.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range arguments, invalid configuration, bad input data.
class ValueError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Counter-free xoshiro256++ generator. All randomness in the library goes
/// through this type so that runs are reproducible bit-for-bit from a seed
/// and the full state fits in a checkpoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform float in [lo, hi). Never returns hi.
  float uniform(float lo, float hi);

  /// Gaussian via Box-Muller (two raw draws per sample).
  float normal(float mean, float stddev);

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derive an independent child stream.
  Rng fork();

  std::string state_string() const;
  static Rng from_state(const std::string& text);

 private:
  Rng() = default;
  std::array<std::uint64_t, 4> s_{};
};

/// Number of worker threads: ROSETTE_GAN_THREADS if set, else hardware
/// concurrency (capped at 8).
int worker_threads();

/// Runs fn(begin, end) over disjoint chunks of [0, n). Callers are
/// responsible for making writes disjoint so results do not depend on the
/// thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace rgan
