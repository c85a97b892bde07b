#include "lazyformer/attention.hpp"

#include <cmath>
#include <cstdlib>
#include <vector>

#include "lazyformer/error.hpp"

namespace lazyformer {

namespace {

void require_shape(const Tensor& t, const Shape& expected, const char* name) {
  if (!t.defined()) throw ConfigError(std::string("attention parameter ") + name + " missing");
  if (t.shape() != expected) {
    throw ConfigError(std::string("attention parameter ") + name + " has shape " +
                      shape_string(t.shape()) + ", expected " + shape_string(expected));
  }
}

Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_bias(ops::matmul(x, w), b);
}

void require_input(const Tensor& x, const AttentionParams& params) {
  if (x.rank() != 2 || x.dim(1) != params.wv.dim(0)) {
    throw DimensionError("attention input " + shape_string(x.shape()) +
                         " does not match hidden width " + std::to_string(params.wv.dim(0)));
  }
}

}  // namespace

void AttentionParams::validate() const {
  if (wq.defined() != wk.defined() || wq.defined() != bq.defined() ||
      wk.defined() != bk.defined()) {
    throw ConfigError("query and key projections must be both present or both absent");
  }
  if (!wv.defined()) throw ConfigError("attention parameter wv missing");
  const std::size_t hidden = wv.dim(0);
  if (heads == 0 || hidden % heads != 0) {
    throw ConfigError("hidden width " + std::to_string(hidden) +
                      " not divisible by head count " + std::to_string(heads));
  }
  const Shape square{hidden, hidden};
  const Shape vec{hidden};
  require_shape(wv, square, "wv");
  require_shape(bv, vec, "bv");
  require_shape(wo, square, "wo");
  require_shape(bo, vec, "bo");
  if (computes_attention()) {
    require_shape(wq, square, "wq");
    require_shape(bq, vec, "bq");
    require_shape(wk, square, "wk");
    require_shape(bk, vec, "bk");
  }
}

std::size_t relative_bucket(std::int64_t offset, std::size_t num_buckets,
                            std::size_t max_distance) {
  const std::size_t half = num_buckets / 2;
  std::size_t bucket = offset > 0 ? half : 0;
  const auto distance = static_cast<std::size_t>(std::llabs(offset));
  const std::size_t max_exact = std::max<std::size_t>(half / 2, 1);
  if (distance < max_exact) return bucket + distance;
  // The epsilon keeps boundaries where the log ratio is an exact integer
  // (e.g. distance 16 of 128 with 8 exact buckets) on the upper side.
  const double ratio = std::log(static_cast<double>(distance) / static_cast<double>(max_exact)) /
                       std::log(static_cast<double>(max_distance) / static_cast<double>(max_exact));
  const auto scaled = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(half - max_exact) + 1e-9));
  return bucket + std::min(max_exact + scaled, half - 1);
}

RelativeBias::RelativeBias(Tensor table, std::size_t max_distance)
    : table_(std::move(table)), max_distance_(max_distance) {
  if (table_.rank() != 2 || table_.dim(0) < 2) {
    throw ConfigError("relative bias table must be [num_buckets >= 2, heads]");
  }
  if (max_distance_ <= table_.dim(0)) {
    throw ConfigError("relative bias max_distance must exceed the bucket count");
  }
}

Tensor RelativeBias::offset_bias(std::size_t n) const {
  std::vector<std::size_t> buckets(2 * n - 1);
  const auto span = static_cast<std::int64_t>(n) - 1;
  for (std::int64_t off = -span; off <= span; ++off) {
    buckets[static_cast<std::size_t>(off + span)] =
        relative_bucket(off, num_buckets(), max_distance_);
  }
  return ops::gather_offset_bias(table_, buckets);
}

AttentionResult compute_attention(const Tensor& x, const AttentionParams& params,
                                  const Tensor& offset_bias, const DropoutPolicy& dropout,
                                  RandomState& rng, std::size_t max_seq_len) {
  if (!params.computes_attention()) {
    throw ConfigError("compute_attention needs query and key projections; this layer reuses");
  }
  require_input(x, params);
  const std::size_t n = x.dim(0);
  if (n > max_seq_len) {
    throw LengthError("sequence length " + std::to_string(n) + " exceeds maximum " +
                      std::to_string(max_seq_len));
  }
  const std::size_t head_dim = x.dim(1) / params.heads;

  const Tensor q = project(x, params.wq, params.bq);
  const Tensor k = project(x, params.wk, params.bk);
  const Tensor v = project(x, params.wv, params.bv);
  // Scoped so the logits buffer is released before the value path when no
  // tape holds on to it.
  Tensor probs = ops::softmax_rows(ops::attention_logits(
      q, k, params.heads, 1.0 / std::sqrt(static_cast<double>(head_dim)), offset_bias));
  const Tensor used = dropout.active() ? ops::dropout(probs, dropout.p, rng) : probs;
  Tensor output = project(ops::attend(used, v), params.wo, params.bo);
  return {std::move(output), AttentionCache{std::move(probs), n}};
}

Tensor reuse_attention(const Tensor& x, const AttentionParams& params,
                       const AttentionCache& cache, const DropoutPolicy& dropout,
                       RandomState& rng) {
  if (params.computes_attention() || params.wq.defined() || params.wk.defined()) {
    throw ConfigError("reuse_attention called on a layer with query/key projections");
  }
  require_input(x, params);
  const std::size_t n = x.dim(0);
  if (!cache.probs.defined() || cache.seq_len != n ||
      cache.probs.shape() != Shape{params.heads, n, n}) {
    throw CacheError("attention cache for length " + std::to_string(cache.seq_len) +
                     " cannot serve an input of length " + std::to_string(n) + " with " +
                     std::to_string(params.heads) + " heads");
  }
  const Tensor v = project(x, params.wv, params.bv);
#ifdef LAZYFORMER_FAULT_BREAK_REUSE
  // Test-only mutation: renormalizes the cache instead of consuming it as is.
  const Tensor probs = ops::softmax_rows(cache.probs);
#else
  const Tensor& probs = cache.probs;
#endif
  const Tensor used = dropout.active() ? ops::dropout(probs, dropout.p, rng) : probs;
  return project(ops::attend(used, v), params.wo, params.bo);
}

}  // namespace lazyformer
