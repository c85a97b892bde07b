#pragma once

#include <cstdint>
#include <random>

namespace lazyformer {

/// Seedable random source shared by initialization, dropout and masking.
///
/// Streams are reproducible for a given seed on a given standard library;
/// `derive` produces statistically independent child streams so that e.g.
/// batch `i` of a training run can be regenerated without replaying batches
/// `0..i-1`.
class RandomState {
 public:
  explicit RandomState(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Child stream keyed by (seed, index); does not advance this stream.
  RandomState derive(std::uint64_t index) const;

  double uniform() { return unit_(engine_); }
  double normal(double mean, double stddev);
  bool bernoulli(double p) { return unit_(engine_) < p; }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

/// splitmix64 finalizer; used to mix seeds and indices.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace lazyformer
