#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "lazyformer/accounting.hpp"
#include "lazyformer/error.hpp"

namespace lazyformer {
namespace {

ModelConfig config(std::size_t w, std::size_t h, std::size_t heads, const std::string& layout,
                   std::size_t vocab = 32768, std::size_t max_len = 512) {
  ModelConfig c;
  c.ffn_width = w;
  c.embed_dim = h;
  c.num_heads = heads;
  c.vocab_size = vocab;
  c.max_seq_len = max_len;
  c.layout = parse_layout(layout);
  return c;
}

// Itemized by hand: tied head, learned positions, 32-bucket relative bias,
// Q/K only in the first layer of each block.
std::size_t hand_count(std::size_t w, std::size_t h, std::size_t heads, std::size_t layers,
                       std::size_t blocks, std::size_t vocab, std::size_t max_len) {
  const std::size_t embeddings = vocab * h + max_len * h + 2 * h;
  const std::size_t qk = 2 * (h * h + h);
  const std::size_t vo = 2 * (h * h + h);
  const std::size_t ffn = h * w + w + w * h + h;
  const std::size_t norms = 4 * h;
  return embeddings + blocks * qk + layers * (vo + ffn + norms) + 32 * heads + vocab;
}

TEST(CountParams, MatchesInstantiatedModels) {
  for (const char* layout : {"M1x3", "M3x1", "M2M1", "M1M2", "M4"}) {
    const ModelConfig c = config(40, 16, 4, layout, 37, 11);
    RandomState rng(1);
    const Model model = build_model(c, rng);
    const CostReport r = count_params(c);
    EXPECT_EQ(r.total_params, model.parameter_count()) << layout;
    EXPECT_EQ(r.total_params, r.params.total());
  }
}

TEST(CountParams, MatchesHandItemization) {
  struct Case {
    std::size_t w, h, heads;
    const char* layout;
    std::size_t layers, blocks;
  };
  for (const Case& k : {Case{3072, 768, 12, "M1x12", 12, 12}, Case{3456, 768, 12, "M2x6", 12, 6},
                        Case{4480, 896, 14, "M2x6", 12, 6}, Case{3072, 768, 12, "M2x6", 12, 6},
                        Case{3584, 768, 12, "M5M3M2M2", 12, 4}}) {
    EXPECT_EQ(count_params(config(k.w, k.h, k.heads, k.layout)).total_params,
              hand_count(k.w, k.h, k.heads, k.layers, k.blocks, 32768, 512))
        << k.layout << " W=" << k.w;
  }
}

TEST(CountParams, QueryKeyRemovalIsTheOnlyDifference) {
  // Dropping b -> b' computing layers removes exactly 2(H² + H) per layer.
  const auto full = count_params(config(3072, 768, 12, "M1x12")).total_params;
  const auto lazy = count_params(config(3072, 768, 12, "M2x6")).total_params;
  EXPECT_EQ(full - lazy, 6u * 2 * (768 * 768 + 768));
}

TEST(CompensatedWidth, PublishedWidths) {
  EXPECT_EQ(compensated_width(3072, 768, 12, parse_layout("M2x6")), 3456u);
  EXPECT_EQ(compensated_width(3072, 768, 12, parse_layout("M3x4")), 3584u);
  EXPECT_EQ(compensated_width(3072, 768, 12, parse_layout("M5M3M2M2")), 3584u);
  EXPECT_EQ(compensated_width(3072, 768, 12, parse_layout("M2M2M3M5")), 3584u);
  EXPECT_EQ(compensated_width(3072, 768, 12, parse_layout("M4x3")), 3648u);
  EXPECT_EQ(compensated_width(3072, 768, 12, parse_layout("M6x2")), 3712u);
}

TEST(CompensatedWidth, BaseWidthWhenEveryLayerComputes) {
  EXPECT_EQ(compensated_width(3072, 768, 12, parse_layout("M1x12")), 3072u);
  EXPECT_EQ(compensated_width(1000, 100, 7, parse_layout("M1x7")), 1000u);
}

TEST(CompensatedWidth, MonotoneDecreasingInBlocks) {
  for (std::size_t h : {128u, 256u, 768u, 1000u}) {
    std::size_t previous = SIZE_MAX;
    for (std::size_t b = 1; b <= 12; ++b) {
      std::vector<std::size_t> sizes(b, 1);
      sizes[0] = 12 - (b - 1);
      const std::size_t w = compensated_width(2048, h, 12, Layout(sizes));
      EXPECT_LE(w, previous) << "H=" << h << " b=" << b;
      EXPECT_EQ(w % 64, 0u);
      previous = w;
    }
  }
}

TEST(CompensatedWidth, RestoresParameterCountClosely) {
  // 2kHΔW of extra FFN weight against 2(k−b)H² removed; the gap left is the
  // rounding to 64 plus the FFN biases.
  const auto base = count_params(config(3072, 768, 12, "M1x12")).total_params;
  for (const char* layout : {"M2x6", "M3x4", "M4x3", "M6x2"}) {
    ModelConfig c = config(3072, 768, 12, layout);
    c.ffn_width = compensated_width(3072, 768, 12, c.layout);
    const auto total = count_params(c).total_params;
    EXPECT_LT(std::abs(static_cast<double>(total) - static_cast<double>(base)) / base, 0.01)
        << layout;
  }
}

TEST(CompensatedWidth, TooManyBlocksIsAnError) {
  EXPECT_THROW(compensated_width(3072, 768, 4, parse_layout("M1x6")), ConfigError);
}

TEST(FlopModel, QueryKeyFlopsHalveWithM2) {
  const auto full = flop_model(config(3072, 768, 12, "M1x12"), 512);
  const auto lazy = flop_model(config(3072, 768, 12, "M2x6"), 512);
  EXPECT_EQ(full.qk_flops, 2 * lazy.qk_flops);
  EXPECT_EQ(full.ffn_flops, lazy.ffn_flops);
  EXPECT_EQ(full.head_flops, lazy.head_flops);
}

TEST(FlopModel, HandComputedLayerCosts) {
  const std::uint64_t n = 64, h = 32, w = 80, heads = 4, v = 50;
  const auto r = flop_model(config(w, h, heads, "M3x1", v, 64), n);
  const std::uint64_t compute = 8 * n * h * h + 2 * n * n * h + 2 * n * n * h + 5 * n * n * heads;
  const std::uint64_t reuse = 4 * n * h * h + 2 * n * n * h;
  EXPECT_EQ(r.attention_flops_compute, compute);
  EXPECT_EQ(r.attention_flops_reuse, 2 * reuse);
  EXPECT_EQ(r.ffn_flops, 3 * 4 * n * h * w);
  EXPECT_EQ(r.head_flops, 2 * n * h * v);
}

TEST(FlopModel, AttentionDropoutCostsOnlyInTraining) {
  ModelConfig c = config(80, 32, 4, "M2x2", 50, 64);
  c.attention_dropout = true;
  const auto eval = flop_model(c, 64, Mode::kEval);
  const auto train = flop_model(c, 64, Mode::kTrain);
  // One extra pass over each of the 4 consumed distributions.
  EXPECT_EQ(train.total_flops() - eval.total_flops(), 4u * 5 * 64 * 64 * 4);
  c.attention_dropout = false;
  EXPECT_EQ(flop_model(c, 64, Mode::kTrain).total_flops(), eval.total_flops());
}

TEST(FlopModel, MatchesInstrumentedForwardExactly) {
  for (const char* layout : {"M1x3", "M3x1", "M2M1"}) {
    const ModelConfig c = config(40, 16, 4, layout, 37, 32);
    RandomState rng(2);
    const Model model = build_model(c, rng);
    for (std::size_t n : {1u, 9u, 32u}) {
      std::vector<std::int64_t> ids(n, 3);
      const auto out = forward(model, ids, Mode::kEval, rng);
      EXPECT_EQ(out.stats.flops, flop_model(c, n).total_flops()) << layout << " n=" << n;
    }
  }
}

TEST(FlopModel, BertScaleWithinFivePercentOfCounters) {
  const ModelConfig c = config(3072, 768, 12, "M1x12");
  RandomState rng(3);
  const Model model = build_model(c, rng);
  std::vector<std::int64_t> ids(128, 7);
  const auto measured = static_cast<double>(forward(model, ids, Mode::kEval, rng).stats.flops);
  const auto predicted = static_cast<double>(flop_model(c, 128).total_flops());
  EXPECT_LT(std::abs(measured - predicted) / predicted, 0.05);
}

TEST(FlopModel, SpeedupBoundedMonotoneAndConvergent) {
  const ModelConfig base = config(3072, 768, 12, "M1x12");
  const ModelConfig lazy = config(3072, 768, 12, "M2x6");
  const double limit = asymptotic_speedup(base, lazy);
  EXPECT_LT(limit, 2.0);
  // (4H + 5N)·12 / ((4H + 5N)·6 + 2H·6)
  EXPECT_NEAR(limit, 12.0 * (4 * 768 + 60) / (6.0 * (4 * 768 + 60) + 6.0 * 2 * 768), 1e-12);
  double previous = 1.0;
  for (std::size_t n = 16; n <= (1u << 22); n *= 2) {
    const double s = predicted_speedup(base, lazy, n);
    EXPECT_GT(s, previous) << n;
    EXPECT_LT(s, limit);
    previous = s;
  }
  EXPECT_NEAR(previous, limit, 1e-3);
}

TEST(FlopModel, LongerBlocksApproachFactorM) {
  // Only the n² term: QKᵀ and softmax vanish from reusing layers, AV stays.
  const ModelConfig base = config(3072, 768, 12, "M1x12");
  double previous = 1.0;
  for (const char* layout : {"M2x6", "M3x4", "M4x3", "M6x2", "M12x1"}) {
    const double s = asymptotic_speedup(base, config(3072, 768, 12, layout));
    EXPECT_GT(s, previous) << layout;
    previous = s;
  }
}

TEST(Report, JsonLinesOneRecordPerGroup) {
  const auto r = flop_model(config(3072, 768, 12, "M2x6"), 128);
  std::istringstream lines(report_json_lines(r));
  std::string line;
  std::size_t params = 0, flops = 0, sum = 0;
  nlohmann::json total;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["kind"] == "params") {
      ++params;
      sum += j["value"].get<std::size_t>();
    } else if (j["kind"] == "flops") {
      ++flops;
    } else {
      total = j;
    }
  }
  EXPECT_EQ(params, 5u);
  EXPECT_EQ(flops, 4u);
  EXPECT_EQ(sum, r.total_params);
  EXPECT_EQ(total["params"].get<std::size_t>(), r.total_params);
  EXPECT_EQ(total["flops"].get<std::uint64_t>(), r.total_flops());
}

TEST(Report, HumanReadableTable) {
  const std::string text = format_report(count_params(config(3072, 768, 12, "M1x12")));
  EXPECT_NE(text.find("embeddings"), std::string::npos);
  EXPECT_NE(text.find("110648192"), std::string::npos);
  EXPECT_EQ(text.find("forward flops"), std::string::npos);
}

}  // namespace
}  // namespace lazyformer
