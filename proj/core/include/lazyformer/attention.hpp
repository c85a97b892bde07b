#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>

#include "lazyformer/random.hpp"
#include "lazyformer/tensor.hpp"

namespace lazyformer {

/// Projection weights of one self-attention sublayer.
///
/// A computing layer owns all four projections. A reusing layer has no query
/// or key projection (`wq`, `bq`, `wk`, `bk` undefined) and attends with the
/// distribution cached by the first layer of its block.
struct AttentionParams {
  std::size_t heads = 1;
  Tensor wq, bq;
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;

  bool computes_attention() const noexcept { return wq.defined() && wk.defined(); }

  /// Throws ConfigError on half-present query/key projections, a width not
  /// divisible by `heads`, or mismatched tensor shapes.
  void validate() const;
};

/// Post-softmax attention distribution of a block's first layer: [heads×n×n].
/// Written once by compute_attention, read by every reusing layer above it.
struct AttentionCache {
  Tensor probs;
  std::size_t seq_len = 0;
};

/// Bidirectional T5 bucketing of the key-minus-query offset. Half of the
/// buckets serve positive offsets; within each half, the first half of the
/// buckets are exact and the rest grow logarithmically up to max_distance.
std::size_t relative_bucket(std::int64_t offset, std::size_t num_buckets,
                            std::size_t max_distance);

/// Learned per-head scalar bias indexed by relative-position bucket.
class RelativeBias {
 public:
  RelativeBias() = default;
  /// `table` is [num_buckets × heads].
  RelativeBias(Tensor table, std::size_t max_distance);

  const Tensor& table() const noexcept { return table_; }
  Tensor& table() noexcept { return table_; }
  std::size_t num_buckets() const { return table_.dim(0); }
  std::size_t heads() const { return table_.dim(1); }
  std::size_t max_distance() const noexcept { return max_distance_; }

  /// Bias of head h for offset j−i at [h][j−i+n−1]; shape [heads × (2n−1)].
  /// Differentiable with respect to the table.
  Tensor offset_bias(std::size_t n) const;

 private:
  Tensor table_;
  std::size_t max_distance_ = 0;
};

/// Attention-probability dropout. Applied only in training mode with the flag
/// on; the cached distribution is always the pre-dropout one, and each
/// consuming layer draws its own mask.
struct DropoutPolicy {
  bool attention_dropout = false;
  double p = 0.1;
  bool training = false;

  bool active() const noexcept { return attention_dropout && training && p > 0.0; }
};

struct AttentionResult {
  Tensor output;
  AttentionCache cache;
};

/// softmax(Q_h K_hᵀ/√d + B_h) per head, then the value path and output
/// projection. `offset_bias` comes from RelativeBias::offset_bias and may be
/// undefined for no positional bias. Throws ConfigError when `params` lacks a
/// query/key projection and LengthError when n exceeds `max_seq_len`.
AttentionResult compute_attention(const Tensor& x, const AttentionParams& params,
                                  const Tensor& offset_bias, const DropoutPolicy& dropout,
                                  RandomState& rng,
                                  std::size_t max_seq_len = std::numeric_limits<std::size_t>::max());

/// Value path over a cached distribution: no logits, no softmax. Gradients
/// reach the cache and, through it, the layer that computed it.
Tensor reuse_attention(const Tensor& x, const AttentionParams& params,
                       const AttentionCache& cache, const DropoutPolicy& dropout,
                       RandomState& rng);

}  // namespace lazyformer
