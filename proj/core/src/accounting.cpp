#include "lazyformer/accounting.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "lazyformer/error.hpp"

namespace lazyformer {

namespace {

std::size_t computing_layers(const ModelConfig& c) { return c.layout.num_blocks(); }

std::size_t reusing_layers(const ModelConfig& c) {
  return c.layout.total_layers() - c.layout.num_blocks();
}

// n² coefficient of the forward cost.
double quadratic_coefficient(const ModelConfig& c, Mode mode) {
  const double h = static_cast<double>(c.embed_dim);
  const double heads = static_cast<double>(c.num_heads);
  const double per_elem = static_cast<double>(kSoftmaxFlopsPerElement);
  const bool dropout = mode == Mode::kTrain && c.attention_dropout;
  const double compute = 4.0 * h + per_elem * heads * (dropout ? 2.0 : 1.0);
  const double reuse = 2.0 * h + (dropout ? per_elem * heads : 0.0);
  return static_cast<double>(computing_layers(c)) * compute +
         static_cast<double>(reusing_layers(c)) * reuse;
}

}  // namespace

CostReport count_params(const ModelConfig& c) {
  c.validate();
  const std::size_t h = c.embed_dim, w = c.ffn_width;
  const std::size_t layers = c.layout.total_layers();
  CostReport r;
  r.params.embeddings = c.vocab_size * h + c.max_seq_len * h;
  r.params.attention = computing_layers(c) * 4 * (h * h + h) +
                       reusing_layers(c) * 2 * (h * h + h) + c.num_rel_buckets * c.num_heads;
  r.params.ffn = layers * (2 * h * w + w + h);
  r.params.norms = 2 * h + layers * 4 * h;
  r.params.head = c.vocab_size;
  r.total_params = r.params.total();
  return r;
}

std::size_t compensated_width(std::size_t base_w, std::size_t hidden, std::size_t layers,
                              const Layout& layout) {
  const std::size_t blocks = layout.num_blocks();
  if (layers == 0 || blocks > layers) {
    throw ConfigError("compensated_width: layout has " + std::to_string(blocks) +
                      " blocks for " + std::to_string(layers) + " layers");
  }
  const double increment = static_cast<double>((layers - blocks) * hidden) /
                           static_cast<double>(layers);
  const auto steps = static_cast<std::size_t>(std::llround(increment / 64.0));
  return base_w + 64 * steps;
}

CostReport flop_model(const ModelConfig& c, std::size_t n, Mode mode) {
  if (n == 0) throw ConfigError("flop_model needs n >= 1");
  CostReport r = count_params(c);
  r.seq_len = n;
  const std::uint64_t nn = n, h = c.embed_dim, w = c.ffn_width, heads = c.num_heads;
  const std::uint64_t square = nn * nn * heads * kSoftmaxFlopsPerElement;
  const bool dropout = mode == Mode::kTrain && c.attention_dropout;
  const std::uint64_t qk = 2 * nn * nn * h;
  const std::uint64_t av = 2 * nn * nn * h;
  const std::uint64_t compute_layer = 4 * (2 * nn * h * h) + qk + av + square +
                                      (dropout ? square : 0);
  const std::uint64_t reuse_layer = 2 * (2 * nn * h * h) + av + (dropout ? square : 0);
  r.attention_flops_compute = computing_layers(c) * compute_layer;
  r.attention_flops_reuse = reusing_layers(c) * reuse_layer;
  r.qk_flops = computing_layers(c) * qk;
  r.softmax_flops = computing_layers(c) * (square + (dropout ? square : 0)) +
                    reusing_layers(c) * (dropout ? square : 0);
  r.ffn_flops = c.layout.total_layers() * 4 * nn * h * w;
  r.head_flops = 2 * nn * h * c.vocab_size;
  return r;
}

double predicted_speedup(const ModelConfig& baseline, const ModelConfig& variant, std::size_t n) {
  return static_cast<double>(flop_model(baseline, n).total_flops()) /
         static_cast<double>(flop_model(variant, n).total_flops());
}

double asymptotic_speedup(const ModelConfig& baseline, const ModelConfig& variant) {
  return quadratic_coefficient(baseline, Mode::kEval) / quadratic_coefficient(variant, Mode::kEval);
}

std::string format_report(const CostReport& r) {
  std::ostringstream out;
  auto row = [&](const char* label, std::uint64_t value) {
    out << "  " << std::left << std::setw(22) << label << std::right << std::setw(16) << value
        << '\n';
  };
  out << "parameters\n";
  row("embeddings", r.params.embeddings);
  row("attention", r.params.attention);
  row("ffn", r.params.ffn);
  row("norms", r.params.norms);
  row("head", r.params.head);
  row("total", r.total_params);
  out << "  " << std::left << std::setw(22) << "total (millions)" << std::right << std::setw(16)
      << std::fixed << std::setprecision(2) << static_cast<double>(r.total_params) / 1e6 << '\n';
  if (r.seq_len > 0) {
    out << "forward flops at n=" << r.seq_len << '\n';
    row("attention (compute)", r.attention_flops_compute);
    row("attention (reuse)", r.attention_flops_reuse);
    row("ffn", r.ffn_flops);
    row("head", r.head_flops);
    row("total", r.total_flops());
  }
  return out.str();
}

std::string report_json_lines(const CostReport& r) {
  using nlohmann::json;
  std::ostringstream out;
  auto emit = [&](const char* kind, const char* group, std::uint64_t value) {
    out << json{{"kind", kind}, {"group", group}, {"value", value}}.dump() << '\n';
  };
  emit("params", "embeddings", r.params.embeddings);
  emit("params", "attention", r.params.attention);
  emit("params", "ffn", r.params.ffn);
  emit("params", "norms", r.params.norms);
  emit("params", "head", r.params.head);
  if (r.seq_len > 0) {
    emit("flops", "attention_compute", r.attention_flops_compute);
    emit("flops", "attention_reuse", r.attention_flops_reuse);
    emit("flops", "ffn", r.ffn_flops);
    emit("flops", "head", r.head_flops);
  }
  json total{{"kind", "total"}, {"params", r.total_params}};
  if (r.seq_len > 0) {
    total["seq_len"] = r.seq_len;
    total["flops"] = r.total_flops();
  }
  out << total.dump() << '\n';
  return out.str();
}

}  // namespace lazyformer
