#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lazyformer/masking.hpp"
#include "lazyformer/model.hpp"

namespace lazyformer {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant suite behind `lazyformer verify`. Deterministic for a seed.
std::vector<PropertyResult> run_verify(std::uint64_t seed = 1);

/// Largest |logit| difference between forward() and the plain-loop reference
/// over `trials` random sequences per length.
double reference_max_abs_diff(const Model& model, std::span<const std::size_t> seq_lens,
                              std::size_t trials, std::uint64_t seed);

struct GradientCheck {
  std::string name;
  double max_abs_error = 0.0;
  /// max |analytic − numeric| / max(|analytic|_∞, |numeric|_∞, 1e-8)
  double relative_error = 0.0;
};

/// Central finite differences of the summed MLM cross-entropy (every
/// position labelled) against backprop, for every entry of every parameter.
/// Train mode reseeds the rng per evaluation so dropout masks stay fixed.
std::vector<GradientCheck> check_gradients(Model& model, std::span<const std::int64_t> ids,
                                           Mode mode, std::uint64_t seed, double step = 1e-4);

struct MaskingStats {
  std::size_t positions = 0;
  std::size_t selected = 0;
  std::size_t masked = 0;
  std::size_t randomized = 0;
  std::size_t kept = 0;

  double selected_fraction() const;
  double mask_fraction() const;    // of selected
  double random_fraction() const;  // of selected
  double keep_fraction() const;    // of selected
};

/// Applies `policy` to `positions` regular tokens in windows of 128.
MaskingStats masking_statistics(const MaskingPolicy& policy, std::size_t positions,
                                std::uint64_t seed);

/// n×n softmaxes executed by one eval forward of `config` over `n` tokens.
std::uint64_t count_square_softmaxes(const ModelConfig& config, std::size_t n,
                                     std::uint64_t seed);

}  // namespace lazyformer
