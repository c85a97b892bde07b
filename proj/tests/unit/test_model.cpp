#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lazyformer/checkpoint.hpp"
#include "lazyformer/error.hpp"
#include "lazyformer/layout.hpp"
#include "lazyformer/model.hpp"
#include "lazyformer/reference.hpp"
#include "support.hpp"

namespace lazyformer {
namespace {

ModelConfig small_config(const std::string& layout) {
  ModelConfig c;
  c.ffn_width = 48;
  c.embed_dim = 24;
  c.num_heads = 3;
  c.vocab_size = 40;
  c.max_seq_len = 20;
  c.layout = parse_layout(layout);
  return c;
}

std::vector<std::int64_t> random_ids(std::size_t n, std::size_t vocab, RandomState& rng) {
  std::vector<std::int64_t> ids(n);
  for (auto& id : ids) id = rng.uniform_int(0, static_cast<std::int64_t>(vocab) - 1);
  return ids;
}

double max_logit_diff(const Model& model, std::span<const std::int64_t> ids) {
  RandomState rng(0);
  const auto out = forward(model, ids, Mode::kEval, rng);
  const auto ref = reference::forward_logits(model, ids);
  double worst = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t v = 0; v < model.config.vocab_size; ++v) {
      worst = std::max(worst, std::abs(out.logits.at(i, v) - ref[i][v]));
    }
  }
  return worst;
}

TEST(Layout, ParsesUniformAndMixedForms) {
  EXPECT_EQ(parse_layout("M2x6").block_sizes(), (std::vector<std::size_t>(6, 2)));
  EXPECT_EQ(parse_layout("M1x12").block_sizes(), (std::vector<std::size_t>(12, 1)));
  EXPECT_EQ(parse_layout("M5M3M2M2").block_sizes(), (std::vector<std::size_t>{5, 3, 2, 2}));
  EXPECT_EQ(parse_layout("M2M2M3M5").block_sizes(), (std::vector<std::size_t>{2, 2, 3, 5}));
  EXPECT_EQ(parse_layout("M12").block_sizes(), (std::vector<std::size_t>{12}));
  EXPECT_EQ(parse_layout("M5M3M2M2").total_layers(), 12u);
}

TEST(Layout, ToStringRoundTrips) {
  for (const char* spec : {"M2x6", "M1x12", "M5M3M2M2", "M3x1"}) {
    const Layout layout = parse_layout(spec);
    EXPECT_EQ(parse_layout(layout.to_string()), layout) << spec;
  }
  EXPECT_EQ(parse_layout("M2M2M2").to_string(), "M2x3");
}

TEST(Layout, ErrorsCarryPositions) {
  const std::vector<std::pair<std::string, std::size_t>> cases = {
      {"", 0}, {"M0x6", 1}, {"M2x0", 3}, {"X2x6", 0}, {"M2x6x", 4}, {"M2M", 3}, {"M2y6", 2},
      {"M5M0", 3}};
  for (const auto& [spec, position] : cases) {
    try {
      parse_layout(spec);
      ADD_FAILURE() << "'" << spec << "' parsed";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.position(), position) << spec << ": " << e.what();
      EXPECT_NE(std::string(e.what()).find("M<layers>x<blocks>"), std::string::npos);
    }
  }
}

TEST(ModelConfig, RejectsInvalidShapes) {
  ModelConfig c = small_config("M1x2");
  EXPECT_NO_THROW(c.validate());
  c.num_heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config("M1x2");
  c.ffn_width = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config("M1x2");
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config("M1x2");
  c.max_seq_len = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  RandomState rng(1);
  c.max_seq_len = 0;
  EXPECT_THROW(build_model(c, rng), ConfigError);
}

TEST(BuildModel, ReusingLayersHaveNoQueryKey) {
  RandomState rng(2);
  const Model model = build_model(small_config("M3M1"), rng);
  ASSERT_EQ(model.blocks.size(), 2u);
  EXPECT_TRUE(model.blocks[0].first_layer.attention.computes_attention());
  ASSERT_EQ(model.blocks[0].rest.size(), 2u);
  for (const auto& layer : model.blocks[0].rest) {
    EXPECT_FALSE(layer.attention.wq.defined());
    EXPECT_FALSE(layer.attention.wk.defined());
    EXPECT_TRUE(layer.attention.wv.defined());
    EXPECT_TRUE(layer.attention.wo.defined());
  }
  EXPECT_TRUE(model.blocks[1].rest.empty());
}

TEST(BuildModel, InitializationStatistics) {
  ModelConfig c = small_config("M1x1");
  c.vocab_size = 2000;
  c.embed_dim = 60;
  c.num_heads = 3;
  c.ffn_width = 60;
  RandomState rng(3);
  const Model model = build_model(c, rng);
  double sum = 0, sq = 0;
  for (double v : model.token_embedding.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(model.token_embedding.numel());
  EXPECT_NEAR(sum / n, 0.0, 5e-4);
  EXPECT_NEAR(std::sqrt(sq / n), kInitStddev, 5e-4);
  for (double v : model.blocks[0].first_layer.ffn_norm_gain.data()) EXPECT_EQ(v, 1.0);
  for (double v : model.blocks[0].first_layer.ffn_in_bias.data()) EXPECT_EQ(v, 0.0);
  for (double v : model.output_bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(BuildModel, ParameterNamesAreUnique) {
  RandomState rng(4);
  const Model model = build_model(small_config("M2M1"), rng);
  std::set<std::string> names;
  for (const auto& p : model.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_TRUE(names.contains("blocks.0.layers.1.attention.wv"));
  EXPECT_FALSE(names.contains("blocks.0.layers.1.attention.wq"));
  EXPECT_TRUE(names.contains("attention.relative_bias"));
}

TEST(Forward, StandardLayoutMatchesReference) {
  RandomState rng(5);
  const Model model = build_model(small_config("M1x3"), rng);
  RandomState data(6);
  for (std::size_t n : {1, 7, 20}) {
    EXPECT_LT(max_logit_diff(model, random_ids(n, 40, data)), 1e-10) << "n=" << n;
  }
}

TEST(Forward, LazyLayoutsMatchReference) {
  RandomState data(7);
  for (const char* layout : {"M2x2", "M3M1", "M1M3", "M4"}) {
    RandomState rng(8);
    const Model model = build_model(small_config(layout), rng);
    EXPECT_LT(max_logit_diff(model, random_ids(11, 40, data)), 1e-10) << layout;
  }
}

TEST(Forward, LazyCountLaw) {
  RandomState data(9);
  for (const char* layout : {"M1x4", "M2x2", "M4x1", "M3M1", "M1M1M2"}) {
    RandomState rng(10);
    const Model model = build_model(small_config(layout), rng);
    const auto out = forward(model, random_ids(9, 40, data), Mode::kEval, rng);
    const std::size_t b = model.config.layout.num_blocks();
    EXPECT_EQ(out.stats.attention_computations, b) << layout;
    EXPECT_EQ(out.stats.softmax_nn_calls, b * model.config.num_heads) << layout;
  }
}

TEST(Forward, SingleTokenIsFinite) {
  RandomState rng(11);
  const Model model = build_model(small_config("M2x2"), rng);
  const std::vector<std::int64_t> ids{5};
  const auto out = forward(model, ids, Mode::kTrain, rng);
  for (double v : out.logits.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(out.stats.attention_computations, 2u);
}

TEST(Forward, ReusingLayersConsumeTheBlockCache) {
  RandomState rng(12);
  const Model model = build_model(small_config("M3M1"), rng);
  RandomState data(13);
  ForwardOptions options;
  options.collect_attention = true;
  const auto out = forward(model, random_ids(8, 40, data), Mode::kEval, rng, options);
  ASSERT_EQ(out.attention.size(), 2u);
  ASSERT_EQ(out.attention[0].size(), 3u);
  for (std::size_t l = 1; l < 3; ++l) {
    const auto& first = out.attention[0][0];
    const auto& later = out.attention[0][l];
    EXPECT_TRUE(std::equal(first.data().begin(), first.data().end(), later.data().begin()));
  }
}

TEST(Forward, EvalIsBitwiseDeterministic) {
  RandomState rng(14);
  ModelConfig c = small_config("M2x2");
  c.attention_dropout = true;
  const Model model = build_model(c, rng);
  RandomState data(15);
  const auto ids = random_ids(12, 40, data);
  RandomState r1(1), r2(2);
  const auto a = forward(model, ids, Mode::kEval, r1);
  const auto b = forward(model, ids, Mode::kEval, r2);
  EXPECT_TRUE(std::equal(a.logits.data().begin(), a.logits.data().end(), b.logits.data().begin()));
}

TEST(Forward, AttentionDropoutFlagDoesNotChangeEval) {
  ModelConfig with = small_config("M2x2");
  with.attention_dropout = true;
  ModelConfig without = with;
  without.attention_dropout = false;
  RandomState r1(16), r2(16);
  const Model a = build_model(with, r1);
  const Model b = build_model(without, r2);
  RandomState data(17);
  const auto ids = random_ids(10, 40, data);
  const auto la = forward(a, ids, Mode::kEval, r1).logits;
  const auto lb = forward(b, ids, Mode::kEval, r2).logits;
  EXPECT_TRUE(std::equal(la.data().begin(), la.data().end(), lb.data().begin()));
}

TEST(Forward, Errors) {
  RandomState rng(18);
  const Model model = build_model(small_config("M1x2"), rng);
  const std::vector<std::int64_t> bad{1, 40};
  EXPECT_THROW(forward(model, bad, Mode::kEval, rng), VocabError);
  const std::vector<std::int64_t> too_long(21, 1);
  EXPECT_THROW(forward(model, too_long, Mode::kEval, rng), LengthError);
  EXPECT_THROW(forward(model, {}, Mode::kEval, rng), LengthError);
}

TEST(Forward, EveryParameterReceivesGradient) {
  RandomState rng(19);
  Model model = build_model(small_config("M2M1"), rng);
  RandomState data(20);
  const auto ids = random_ids(12, 40, data);
  Tape tape;
  Tensor loss;
  {
    Tape::Recording recording(tape);
    loss = ops::cross_entropy_sum(forward(model, ids, Mode::kTrain, rng).logits, ids);
  }
  tape.backward(loss);
  for (auto& p : model.parameters()) {
    double norm = 0.0;
    for (double g : p.tensor.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << p.name;
  }
}

TEST(Forward, CountedFlopsFollowTheOps) {
  RandomState rng(21);
  const Model model = build_model(small_config("M1x2"), rng);
  RandomState data(22);
  ForwardOptions options;
  options.skip_head = true;
  const auto with_head = forward(model, random_ids(6, 40, data), Mode::kEval, rng);
  const auto without = forward(model, random_ids(6, 40, data), Mode::kEval, rng, options);
  EXPECT_FALSE(without.logits.defined());
  EXPECT_EQ(with_head.stats.flops - without.stats.flops, 2u * 6 * 24 * 40);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  RandomState rng(23);
  ModelConfig c = small_config("M2M1");
  c.attention_dropout = true;
  c.hidden_dropout_p = 0.2;
  const Model model = build_model(c, rng);
  const std::string bytes = save_checkpoint(model);
  const Model loaded = load_checkpoint(bytes);
  EXPECT_EQ(loaded.config, model.config);
  EXPECT_EQ(save_checkpoint(loaded), bytes);
  RandomState data(24);
  const auto ids = random_ids(9, 40, data);
  RandomState r1(0), r2(0);
  const auto a = forward(model, ids, Mode::kEval, r1).logits;
  const auto b = forward(loaded, ids, Mode::kEval, r2).logits;
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Checkpoint, HeaderLayout) {
  RandomState rng(25);
  const std::string bytes = save_checkpoint(build_model(small_config("M1x1"), rng));
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "LZYF");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(bytes.substr(5, 3), std::string(3, '\0'));
}

TEST(Checkpoint, CorruptionIsAnErrorNotACrash) {
  RandomState rng(26);
  const std::string bytes = save_checkpoint(build_model(small_config("M2x1"), rng));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(bad_magic), CheckpointError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(load_checkpoint(bad_version), CheckpointError);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2,
                          bytes.size() - 1}) {
    EXPECT_THROW(load_checkpoint(std::string_view(bytes).substr(0, cut)), CheckpointError) << cut;
  }
  EXPECT_THROW(load_checkpoint(bytes + "x"), CheckpointError);
}

}  // namespace
}  // namespace lazyformer
