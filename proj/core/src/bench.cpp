#include "lazyformer/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lazyformer/error.hpp"

namespace lazyformer {

namespace {

class FiniteChecksOff {
 public:
  FiniteChecksOff() : previous_(finite_checks_enabled()) { set_finite_checks(false); }
  ~FiniteChecksOff() { set_finite_checks(previous_); }

 private:
  bool previous_;
};

// Large tensors would otherwise be mmapped and unmapped on every pass, so the
// first config timed at a new length pays the page faults. Serving them from
// a heap that is never trimmed keeps every cell at the same steady state.
void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

std::vector<std::int64_t> shared_ids(const BenchPlan& plan, std::size_t n,
                                     std::size_t vocab_size) {
  RandomState rng = RandomState(plan.seed).derive(n);
  std::vector<std::int64_t> ids(n);
  const auto hi = static_cast<std::int64_t>(vocab_size) - 1;
  const std::int64_t lo = std::min<std::int64_t>(4, hi);
  for (auto& id : ids) id = rng.uniform_int(lo, hi);
  return ids;
}

double time_pass(Model& model, std::span<const std::int64_t> ids, const BenchPlan& plan,
                 RandomState& rng) {
  const Mode mode = plan.train_mode ? Mode::kTrain : Mode::kEval;
  const auto start = std::chrono::steady_clock::now();
  if (plan.measure == BenchMeasure::kForward) {
    const auto out = forward(model, ids, mode, rng, {});
    (void)out;
  } else {
    model.zero_grad();
    Tape tape;
    Tensor loss;
    {
      Tape::Recording recording(tape);
      const auto out = forward(model, ids, mode, rng, {});
      loss = ops::cross_entropy_sum(out.logits, ids);
    }
    tape.backward(loss);
  }
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

void BenchPlan::validate() const {
  if (configs.empty()) throw PlanError("benchmark plan has no configs");
  if (seq_lens.empty()) throw PlanError("benchmark plan has no sequence lengths");
  if (iters < 3) throw PlanError("benchmark needs iters >= 3");
  if (warmup_iters < 1) throw PlanError("benchmark needs warmup_iters >= 1");
  if (!(min_time_ms >= 0.0)) throw PlanError("benchmark min_time_ms must be >= 0");
  std::set<std::string> labels;
  for (const auto& c : configs) {
    if (!labels.insert(c.label).second) throw PlanError("duplicate config label '" + c.label + "'");
    try {
      c.config.validate();
    } catch (const ConfigError& e) {
      throw PlanError("config '" + c.label + "': " + e.what());
    }
    for (auto n : seq_lens) {
      if (n == 0 || n > c.config.max_seq_len) {
        throw PlanError("sequence length " + std::to_string(n) + " invalid for config '" +
                        c.label + "' (max_seq_len " + std::to_string(c.config.max_seq_len) + ")");
      }
    }
  }
  if (!labels.contains(baseline)) throw PlanError("no config labelled '" + baseline + "'");
}

const BenchCell& BenchResult::cell(const std::string& label, std::size_t n) const {
  for (const auto& c : cells) {
    if (c.label == label && c.seq_len == n) return c;
  }
  throw PlanError("no benchmark cell for '" + label + "' at n=" + std::to_string(n));
}

BenchResult run_bench(const BenchPlan& plan, const std::function<void(const BenchCell&)>& on_cell) {
  plan.validate();
  FiniteChecksOff unchecked;
  retain_freed_memory();

  std::vector<Model> models;
  for (std::size_t i = 0; i < plan.configs.size(); ++i) {
    RandomState init = RandomState(plan.seed).derive(1'000'000 + i);
    models.push_back(build_model(plan.configs[i].config, init));
  }

  BenchResult result;
  result.baseline = plan.baseline;
  result.measure = plan.measure;
  result.train_mode = plan.train_mode;
  result.seed = plan.seed;
  result.build_profile = build_profile();

  for (auto n : plan.seq_lens) {
    const std::size_t count = plan.configs.size();
    std::vector<BenchCell> row(count);
    std::vector<std::vector<std::int64_t>> ids(count);
    std::vector<RandomState> rngs;
    std::vector<double> spent(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& cfg = plan.configs[i];
      ids[i] = shared_ids(plan, n, cfg.config.vocab_size);
      rngs.push_back(RandomState(plan.seed).derive(n * 1000 + i));
      row[i].label = cfg.label;
      row[i].seq_len = n;
      row[i].config = cfg.config;
      row[i].params = models[i].parameter_count();
    }
    auto done = [&](std::size_t i) {
      return row[i].samples_ms.size() >= plan.iters && spent[i] >= plan.min_time_ms;
    };
    auto timed = [&](std::size_t i) {
      row[i].samples_ms.push_back(time_pass(models[i], ids[i], plan, rngs[i]));
      spent[i] += row[i].samples_ms.back();
    };
    if (plan.interleave) {
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t w = 0; w < plan.warmup_iters; ++w) time_pass(models[i], ids[i], plan, rngs[i]);
      }
      for (std::size_t round = 0;; ++round) {
        bool any = false;
        for (std::size_t k = 0; k < count; ++k) {
          const std::size_t i = (k + round) % count;
          if (done(i)) continue;
          timed(i);
          any = true;
        }
        if (!any) break;
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t w = 0; w < plan.warmup_iters; ++w) time_pass(models[i], ids[i], plan, rngs[i]);
        while (!done(i)) timed(i);
      }
    }
    for (auto& cell : row) {
      cell.median_ms = median(cell.samples_ms);
      cell.mad_ms = median_absolute_deviation(cell.samples_ms);
    }
    const auto base = std::find_if(row.begin(), row.end(),
                                   [&](const BenchCell& c) { return c.label == plan.baseline; });
    const double base_ms = base->median_ms;
    for (auto& cell : row) {
      cell.speedup = cell.label == plan.baseline ? 1.0 : base_ms / cell.median_ms;
      if (on_cell) on_cell(cell);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double median_absolute_deviation(std::span<const double> values) {
  const double m = median(std::vector<double>(values.begin(), values.end()));
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::abs(v - m));
  return median(std::move(dev));
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ContractError("spearman needs two samples of equal length >= 2");
  }
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::string build_profile() {
#ifdef LAZYFORMER_BUILD_PROFILE
  return LAZYFORMER_BUILD_PROFILE;
#else
  return "unknown";
#endif
}

std::string emit_report(const BenchResult& result, ReportFormat format) {
  if (result.cells.empty()) throw ContractError("emit_report on an empty benchmark result");
  std::ostringstream out;
  out << std::fixed;
  const char* measure = result.measure == BenchMeasure::kForward ? "forward" : "forward-backward";
  if (format == ReportFormat::kCsv) {
    out << "# engine_threads=" << result.engine_threads << " build_profile=" << result.build_profile
        << " seed=" << result.seed << " measure=" << measure
        << " mode=" << (result.train_mode ? "train" : "eval") << '\n';
    out << "label,n,median_ms,mad_ms,speedup\n";
    for (const auto& c : result.cells) {
      out << c.label << ',' << c.seq_len << ',' << std::setprecision(3) << c.median_ms << ','
          << c.mad_ms << ',' << std::setprecision(4) << c.speedup << '\n';
    }
    return out.str();
  }

  out << "<!-- engine_threads=" << result.engine_threads
      << " build_profile=" << result.build_profile << " seed=" << result.seed
      << " measure=" << measure << " -->\n";
  std::size_t current = 0;
  for (const auto& c : result.cells) {
    if (c.seq_len != current) {
      current = c.seq_len;
      out << "\nn = " << current << "\n\n";
      out << "| | Params | (W,H,N) | Time (ms) | Speedup |\n";
      out << "|---|---|---|---|---|\n";
    }
    out << "| " << c.label << " | " << std::setprecision(1)
        << static_cast<double>(c.params) / 1e6 << "M | (" << c.config.ffn_width << ','
        << c.config.embed_dim << ',' << c.config.num_heads << ") | " << std::setprecision(2)
        << c.median_ms << " | " << std::setprecision(2) << c.speedup << "x |\n";
  }
  return out.str();
}

}  // namespace lazyformer
