#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "lazyformer/layout.hpp"
#include "lazyformer/model.hpp"

namespace lazyformer {

struct ParamGroups {
  std::size_t embeddings = 0;  // token + absolute position tables
  std::size_t attention = 0;   // projections of every layer + relative bias table
  std::size_t ffn = 0;
  std::size_t norms = 0;
  std::size_t head = 0;  // output bias; the projection is tied to the embeddings

  std::size_t total() const noexcept { return embeddings + attention + ffn + norms + head; }
};

/// Parameter and FLOP breakdown. A multiply-add counts as 2 flops; softmax
/// (and attention dropout, when active) counts kSoftmaxFlopsPerElement per
/// element of each n×n matrix.
struct CostReport {
  ParamGroups params;
  std::size_t total_params = 0;

  std::size_t seq_len = 0;  // 0 when only parameters were counted
  /// Computing layers: Q/K/V/O projections, QKᵀ, AV, softmax.
  std::uint64_t attention_flops_compute = 0;
  /// Reusing layers: V/O projections and AV only.
  std::uint64_t attention_flops_reuse = 0;
  std::uint64_t ffn_flops = 0;
  std::uint64_t head_flops = 0;
  /// QKᵀ share of attention_flops_compute.
  std::uint64_t qk_flops = 0;
  /// Softmax (+ dropout) share of attention_flops_compute / _reuse.
  std::uint64_t softmax_flops = 0;

  std::uint64_t total_flops() const noexcept {
    return attention_flops_compute + attention_flops_reuse + ffn_flops + head_flops;
  }
};

/// Exact parameter count of the model build_model would instantiate.
CostReport count_params(const ModelConfig& config);

/// FFN width that restores the 2(k−b)H² weights dropped with the query/key
/// projections: base_w + (k−b)·H/k, the increment rounded to the nearest
/// multiple of 64. Throws ConfigError if the layout has more than k blocks.
std::size_t compensated_width(std::size_t base_w, std::size_t hidden, std::size_t layers,
                              const Layout& layout);

/// Parameters plus forward FLOPs at sequence length n. With `mode` kTrain and
/// attention dropout on, the dropout over every consumed distribution is
/// included.
CostReport flop_model(const ModelConfig& config, std::size_t n, Mode mode = Mode::kEval);

/// flop_model(baseline).total / flop_model(variant).total at length n.
double predicted_speedup(const ModelConfig& baseline, const ModelConfig& variant, std::size_t n);

/// Limit of predicted_speedup as n → ∞ (ratio of the n² coefficients).
double asymptotic_speedup(const ModelConfig& baseline, const ModelConfig& variant);

/// Aligned human-readable table.
std::string format_report(const CostReport& report);

/// One JSON object per line: a record per parameter group, a record per FLOP
/// group when seq_len > 0, then a totals record.
std::string report_json_lines(const CostReport& report);

}  // namespace lazyformer
