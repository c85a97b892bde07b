#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lazyformer/model.hpp"

namespace lazyformer::reference {

/// Eval-mode logits [n×V] computed with plain nested loops straight from the
/// parameter values: no tape, no attention kernels, no cache objects. A
/// layer without query/key weights attends with the most recent distribution
/// computed below it, which for an all-ones layout is a standard transformer.
std::vector<std::vector<double>> forward_logits(const Model& model,
                                                std::span<const std::int64_t> token_ids);

/// Bucket of a key-minus-query offset, written directly from the T5
/// description (sign split, exact small distances, log-spaced large ones).
std::size_t t5_bucket(std::int64_t offset, std::size_t num_buckets, std::size_t max_distance);

}  // namespace lazyformer::reference
