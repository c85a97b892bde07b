#include "lazyformer/masking.hpp"

#include <cmath>

#include "lazyformer/error.hpp"

namespace lazyformer {

void MaskingPolicy::validate() const {
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw ConfigError("mask_prob must be in [0, 1]");
  for (double f : {mask_token_frac, random_frac, keep_frac}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("masking fractions must be in [0, 1]");
  }
  if (std::abs(mask_token_frac + random_frac + keep_frac - 1.0) > 1e-9) {
    throw ConfigError("masking fractions must sum to 1");
  }
  if (first_regular_id < 0 || static_cast<std::size_t>(first_regular_id) >= vocab_size) {
    throw ConfigError("masking policy needs a vocabulary with regular tokens");
  }
}

MaskedSequence apply_masking(std::span<const std::int64_t> tokens, const MaskingPolicy& policy,
                             RandomState& rng) {
  policy.validate();
  MaskedSequence out;
  out.inputs.assign(tokens.begin(), tokens.end());
  out.labels.assign(tokens.size(), ops::kIgnoreLabel);
  out.actions.assign(tokens.size(), MaskAction::kNone);
  const auto last_id = static_cast<std::int64_t>(policy.vocab_size) - 1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < policy.first_regular_id) continue;
    if (!rng.bernoulli(policy.mask_prob)) continue;
    out.labels[i] = tokens[i];
    const double u = rng.uniform();
    if (u < policy.mask_token_frac) {
      out.inputs[i] = policy.mask_token_id;
      out.actions[i] = MaskAction::kMask;
    } else if (u < policy.mask_token_frac + policy.random_frac) {
      out.inputs[i] = rng.uniform_int(policy.first_regular_id, last_id);
      out.actions[i] = MaskAction::kRandom;
    } else {
      out.actions[i] = MaskAction::kKeep;
    }
  }
  return out;
}

}  // namespace lazyformer
