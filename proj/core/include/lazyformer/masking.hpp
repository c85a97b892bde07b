#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lazyformer/random.hpp"
#include "lazyformer/tensor.hpp"
#include "lazyformer/tokenizer.hpp"

namespace lazyformer {

/// MLM corruption: each maskable position is selected with `mask_prob`;
/// selected positions become [MASK], a random regular token, or stay as is,
/// in proportions mask_token_frac / random_frac / keep_frac.
struct MaskingPolicy {
  double mask_prob = 0.15;
  double mask_token_frac = 0.80;
  double random_frac = 0.10;
  double keep_frac = 0.10;
  std::int64_t mask_token_id = Vocab::kMask;
  std::int64_t pad_token_id = Vocab::kPad;
  /// Ids below this are specials: never selected, never drawn as replacements.
  std::int64_t first_regular_id = Vocab::kNumSpecial;
  std::size_t vocab_size = 0;

  /// Throws ConfigError unless the fractions sum to 1, mask_prob ∈ [0, 1]
  /// and the vocabulary has at least one regular token.
  void validate() const;
};

enum class MaskAction : std::uint8_t { kNone, kMask, kRandom, kKeep };

struct MaskedSequence {
  std::vector<std::int64_t> inputs;
  std::vector<std::int64_t> labels;  // original id where selected, else ops::kIgnoreLabel
  std::vector<MaskAction> actions;
};

MaskedSequence apply_masking(std::span<const std::int64_t> tokens, const MaskingPolicy& policy,
                             RandomState& rng);

}  // namespace lazyformer
