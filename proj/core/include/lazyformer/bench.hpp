#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lazyformer/model.hpp"

namespace lazyformer {

enum class BenchMeasure { kForward, kForwardBackward };

struct BenchConfig {
  std::string label;
  ModelConfig config;
};

struct BenchPlan {
  std::vector<BenchConfig> configs;
  std::vector<std::size_t> seq_lens;
  std::size_t iters = 5;
  std::size_t warmup_iters = 1;
  /// Keep timing past `iters` until the timed runs of a cell add up to this
  /// many milliseconds. 0 runs exactly `iters`.
  double min_time_ms = 0.0;
  /// Time the configs of one length in alternating rounds (order rotated
  /// each round) so slow drift of the machine hits every config alike.
  /// Off: each cell runs all of its passes back to back.
  bool interleave = true;
  BenchMeasure measure = BenchMeasure::kForward;
  /// Time training-mode passes (dropout active) instead of eval-mode ones.
  bool train_mode = false;
  /// Label of the config every speedup is relative to.
  std::string baseline = "baseline";
  std::uint64_t seed = 1;

  /// Throws PlanError: iters < 3, warmup < 1, no configs, unknown baseline,
  /// duplicate labels, or a length above some config's max_seq_len.
  void validate() const;
};

struct BenchCell {
  std::string label;
  std::size_t seq_len = 0;
  double median_ms = 0.0;
  double mad_ms = 0.0;
  double speedup = 1.0;  // baseline median / this median at the same n
  std::size_t params = 0;
  ModelConfig config;
  std::vector<double> samples_ms;
};

struct BenchResult {
  std::vector<BenchCell> cells;  // grouped by n, configs in plan order
  std::string baseline;
  BenchMeasure measure = BenchMeasure::kForward;
  bool train_mode = false;
  std::uint64_t seed = 0;
  std::size_t engine_threads = 1;
  std::string build_profile;

  const BenchCell& cell(const std::string& label, std::size_t n) const;
};

/// Times every (config, n) cell: warmup passes discarded, then at least
/// `iters` timed passes; the same random token ids are used for every config
/// at a given n. Passes run one at a time on the calling thread.
BenchResult run_bench(const BenchPlan& plan,
                      const std::function<void(const BenchCell&)>& on_cell = {});

double median(std::vector<double> values);
double median_absolute_deviation(std::span<const double> values);
/// Rank correlation; ties receive their average rank.
double spearman(std::span<const double> a, std::span<const double> b);

enum class ReportFormat { kCsv, kMarkdown };

/// CSV: `#` metadata lines, then `label,n,median_ms,mad_ms,speedup`.
/// Markdown: one table per n with columns | | Params | (W,H,N) | Time | Speedup |.
std::string emit_report(const BenchResult& result, ReportFormat format);

std::string build_profile();

}  // namespace lazyformer
