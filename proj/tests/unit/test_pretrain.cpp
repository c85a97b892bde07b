#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "lazyformer/corpus.hpp"
#include "lazyformer/error.hpp"
#include "lazyformer/masking.hpp"
#include "lazyformer/optimizer.hpp"
#include "lazyformer/tokenizer.hpp"
#include "lazyformer/trainer.hpp"
#include "lazyformer/verify.hpp"

namespace lazyformer {
namespace {

TEST(Tokenizer, SplitsLowercasesAndIsolatesPunctuation) {
  EXPECT_EQ(split_words("Hello, World!  foo\tBAR"),
            (std::vector<std::string>{"hello", ",", "world", "!", "foo", "bar"}));
  EXPECT_TRUE(split_words("   ").empty());
  EXPECT_EQ(split_words("a.b"), (std::vector<std::string>{"a", ".", "b"}));
}

TEST(Tokenizer, SpecialsComeFirst) {
  const Vocab v;
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(Vocab::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocab::kMask), "[MASK]");
  EXPECT_EQ(v.token(Vocab::kUnk), "[UNK]");
  EXPECT_EQ(v.token(Vocab::kSep), "[SEP]");
  EXPECT_THROW(Vocab({"a", "b"}), ConfigError);
  EXPECT_THROW(Vocab({"[PAD]", "[MASK]", "[UNK]", "[SEP]", "x", "x"}), ConfigError);
}

TEST(Tokenizer, FrequencyOrderedVocabularyWithLexicographicTies) {
  const Vocab v = Vocab::from_documents({"b a c a", "c b a d"}, 7);
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(4), "a");
  EXPECT_EQ(v.token(5), "b");
  EXPECT_EQ(v.token(6), "c");
  EXPECT_EQ(v.id("d"), Vocab::kUnk);
  EXPECT_EQ(tokenize("A b, d", v), (std::vector<std::int64_t>{4, 5, Vocab::kUnk, Vocab::kUnk}));
  EXPECT_EQ(detokenize({4, 6, 3}, v), "a c [SEP]");
}

TEST(Tokenizer, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "lazyformer_vocab_test.txt";
  const Vocab v = Vocab::from_documents({"x y z y"}, 10);
  v.save(path);
  const Vocab loaded = Vocab::load(path);
  ASSERT_EQ(loaded.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(loaded.token(i), v.token(i));
  std::filesystem::remove(path);
}

TEST(Corpus, PackingInsertsSeparatorsAndDropsTail) {
  const Vocab v = Vocab::from_documents({"a b c"}, 10);
  const auto windows = pack_windows({"a b", "c", "a b c"}, v, 3);
  // stream: a b SEP c SEP a b c -> two full windows of 3
  ASSERT_EQ(windows.size(), 2u);
  EXPECT_EQ(windows[0][2], Vocab::kSep);
  EXPECT_EQ(windows[1][0], v.id("c"));
  EXPECT_THROW(pack_windows({"a"}, v, 0), ConfigError);
}

TEST(Corpus, SyntheticDocumentsRepeatTheirPhrase) {
  SyntheticCorpusOptions o;
  o.documents = 20;
  const auto docs = synthetic_documents(o);
  ASSERT_EQ(docs.size(), 20u);
  for (const auto& d : docs) {
    const auto words = split_words(d);
    ASSERT_EQ(words.size() % o.phrase_length, 0u);
    ASSERT_GE(words.size() / o.phrase_length, o.min_repeats);
    ASSERT_LE(words.size() / o.phrase_length, o.max_repeats);
    for (std::size_t i = o.phrase_length; i < words.size(); ++i) {
      EXPECT_EQ(words[i], words[i - o.phrase_length]);
    }
  }
  EXPECT_EQ(synthetic_documents(o), docs);
}

MaskingPolicy policy(std::size_t vocab, double p = 0.15) {
  MaskingPolicy m;
  m.vocab_size = vocab;
  m.mask_prob = p;
  return m;
}

TEST(Masking, ZeroProbabilityLeavesEverythingAlone) {
  RandomState rng(1);
  std::vector<std::int64_t> tokens = {5, 6, 7, 3, 8};
  const auto out = apply_masking(tokens, policy(20, 0.0), rng);
  EXPECT_EQ(out.inputs, tokens);
  for (auto l : out.labels) EXPECT_EQ(l, ops::kIgnoreLabel);
}

TEST(Masking, FullProbabilitySelectsEveryRegularTokenOnly) {
  RandomState rng(2);
  std::vector<std::int64_t> tokens = {0, 5, 1, 6, 2, 7, 3};
  const auto out = apply_masking(tokens, policy(20, 1.0), rng);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (Vocab::is_special(tokens[i])) {
      EXPECT_EQ(out.labels[i], ops::kIgnoreLabel);
      EXPECT_EQ(out.inputs[i], tokens[i]);
      EXPECT_EQ(out.actions[i], MaskAction::kNone);
    } else {
      EXPECT_EQ(out.labels[i], tokens[i]);
      EXPECT_NE(out.actions[i], MaskAction::kNone);
    }
  }
}

TEST(Masking, RandomReplacementsAreRegularTokens) {
  RandomState rng(3);
  std::vector<std::int64_t> tokens(5000, 9);
  const auto out = apply_masking(tokens, policy(12, 1.0), rng);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (out.actions[i] == MaskAction::kRandom) {
      EXPECT_GE(out.inputs[i], Vocab::kNumSpecial);
      EXPECT_LT(out.inputs[i], 12);
    }
    if (out.actions[i] == MaskAction::kMask) {
      EXPECT_EQ(out.inputs[i], Vocab::kMask);
    }
    if (out.actions[i] == MaskAction::kKeep) {
      EXPECT_EQ(out.inputs[i], 9);
    }
  }
}

TEST(Masking, StatisticsMatchThePolicy) {
  const auto s = masking_statistics(policy(1000), 100'000, 5);
  EXPECT_NEAR(s.selected_fraction(), 0.15, 0.005);
  EXPECT_NEAR(s.mask_fraction(), 0.80, 0.02);
  EXPECT_NEAR(s.random_fraction(), 0.10, 0.02);
  EXPECT_NEAR(s.keep_fraction(), 0.10, 0.02);
}

TEST(Masking, InvalidPoliciesRejected) {
  RandomState rng(1);
  std::vector<std::int64_t> tokens = {5};
  auto bad = policy(20);
  bad.mask_prob = 1.5;
  EXPECT_THROW(apply_masking(tokens, bad, rng), ConfigError);
  bad = policy(20);
  bad.keep_frac = 0.2;
  EXPECT_THROW(apply_masking(tokens, bad, rng), ConfigError);
  EXPECT_THROW(apply_masking(tokens, policy(4), rng), ConfigError);
}

TEST(Schedule, Endpoints) {
  const LrSchedule s{1e-4, 10'000, 1'000'000};
  EXPECT_EQ(lr_at(0, s), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(5'000, s), 5e-5);
  EXPECT_DOUBLE_EQ(lr_at(10'000, s), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(505'000, s), 5e-5);
  EXPECT_EQ(lr_at(1'000'000, s), 0.0);
  EXPECT_EQ(lr_at(2'000'000, s), 0.0);
}

TEST(Schedule, PiecewiseLinearAndPeaked) {
  const LrSchedule s{2e-3, 7, 31};
  double peak = 0.0;
  for (std::size_t t = 0; t <= 31; ++t) peak = std::max(peak, lr_at(t, s));
  EXPECT_DOUBLE_EQ(peak, 2e-3);
  for (std::size_t t = 1; t < 7; ++t) {
    EXPECT_NEAR(lr_at(t + 1, s) - lr_at(t, s), 2e-3 / 7, 1e-15);
  }
  for (std::size_t t = 7; t < 30; ++t) {
    EXPECT_NEAR(lr_at(t, s) - lr_at(t + 1, s), 2e-3 / 24, 1e-15);
  }
}

TEST(Schedule, Validation) {
  EXPECT_THROW((LrSchedule{1e-3, 0, 10}.validate()), ConfigError);
  EXPECT_THROW((LrSchedule{1e-3, 10, 10}.validate()), ConfigError);
  EXPECT_THROW((LrSchedule{0.0, 1, 10}.validate()), ConfigError);
  EXPECT_NO_THROW((LrSchedule{1e-3, 1, 10}.validate()));
  EXPECT_EQ(LrSchedule::from_warmup_ratio(1e-3, 0.01, 1'000'000).warmup_steps, 10'000u);
  EXPECT_EQ(LrSchedule::from_warmup_ratio(1e-3, 0.01, 50).warmup_steps, 1u);
}

TEST(AdamW, MatchesHandSteppedReference) {
  Tensor w(Shape{2, 2}, std::vector<double>{0.5, -0.3, 0.1, 0.9});
  Tensor b(Shape{2}, std::vector<double>{0.2, -0.4});
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  AdamConfig config;
  config.clip_norm = 0.0;
  AdamW opt({{"w", w}, {"b", b}}, config);

  std::vector<double> rw = {0.5, -0.3, 0.1, 0.9}, rb = {0.2, -0.4};
  std::vector<double> mw(4), vw(4), mb(2), vb(2);
  auto reference = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                       const std::vector<double>& g, double lr, int t, bool decay) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(0.9, t));
      const double vhat = v[i] / (1 - std::pow(0.999, t));
      if (decay) p[i] -= lr * 0.01 * p[i];
      p[i] -= lr * mhat / (std::sqrt(vhat) + 1e-6);
    }
  };
  for (int t = 1; t <= 5; ++t) {
    std::vector<double> gw = {0.1 * t, -0.2, 0.05, 0.3 / t}, gb = {-0.1, 0.02 * t};
    std::copy(gw.begin(), gw.end(), w.grad().begin());
    std::copy(gb.begin(), gb.end(), b.grad().begin());
    const double lr = 1e-2 * t;
    opt.step(lr);
    reference(rw, mw, vw, gw, lr, t, true);
    reference(rb, mb, vb, gb, lr, t, false);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.at(i), rw[i], 1e-12);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b.at(i), rb[i], 1e-12);
  }
  EXPECT_EQ(opt.step_count(), 5u);
}

TEST(AdamW, DecayOnlyTouchesMatrices) {
  Tensor w(Shape{2, 2}, 1.0), g(Shape{2}, 1.0);
  AdamW opt({{"w", w}, {"gain", g}});
  w.grad();
  g.grad();
  opt.step(0.1);
  for (double x : w.data()) EXPECT_DOUBLE_EQ(x, 1.0 - 0.1 * 0.01);
  for (double x : g.data()) EXPECT_DOUBLE_EQ(x, 1.0);
}

TEST(AdamW, ClipsGlobalNorm) {
  Tensor a(Shape{2}, 0.0), b(Shape{1}, 0.0);
  AdamConfig config;
  config.weight_decay = 0.0;
  AdamW opt({{"a", a}, {"b", b}}, config);
  a.grad()[0] = 3.0;
  a.grad()[1] = 0.0;
  b.grad()[0] = 4.0;
  const auto info = opt.step(1e-3);
  EXPECT_DOUBLE_EQ(info.grad_norm, 5.0);
  EXPECT_DOUBLE_EQ(info.clip_scale, 0.2);
  // the moments see the clipped gradient
  EXPECT_NEAR(opt.state().first_moment[0][0], 0.1 * 0.6, 1e-15);
  EXPECT_NEAR(opt.state().first_moment[1][0], 0.1 * 0.8, 1e-15);
}

ModelConfig tiny_config(const std::string& layout, std::size_t vocab) {
  ModelConfig c;
  c.ffn_width = 64;
  c.embed_dim = 32;
  c.num_heads = 4;
  c.vocab_size = vocab;
  c.max_seq_len = 24;
  c.layout = parse_layout(layout);
  return c;
}

struct TinyData {
  Vocab vocab;
  std::vector<std::vector<std::int64_t>> windows;
};

TinyData tiny_data() {
  SyntheticCorpusOptions o;
  o.documents = 300;
  o.distinct_words = 40;
  const auto docs = synthetic_documents(o);
  TinyData d{Vocab::from_documents(docs, 64), {}};
  d.windows = pack_windows(docs, d.vocab, 24);
  return d;
}

TEST(Train, SameSeedSameLosses) {
  const TinyData data = tiny_data();
  TrainOptions o;
  o.steps = 6;
  o.batch_size = 2;
  o.schedule = {1e-3, 2, 6};
  std::vector<std::vector<TrainLogRow>> runs;
  for (int r = 0; r < 2; ++r) {
    RandomState init(4);
    Model m = build_model(tiny_config("M2x1", data.vocab.size()), init);
    runs.push_back(train(m, data.windows, o));
  }
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(runs[0][i].loss, runs[1][i].loss);
    EXPECT_EQ(runs[0][i].lr, runs[1][i].lr);
    EXPECT_EQ(runs[0][i].step, i + 1);
  }
}

TEST(Train, LossHalvesOnSmallCorpus) {
  const TinyData data = tiny_data();
  TrainOptions o;
  o.steps = 400;
  o.batch_size = 8;
  o.schedule = {1e-2, 10, 400};
  RandomState init(5);
  Model m = build_model(tiny_config("M1x2", data.vocab.size()), init);
  const auto log = train(m, data.windows, o);
  auto mean = [&](std::size_t from, std::size_t to) {
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += log[i].loss;
    return s / static_cast<double>(to - from);
  };
  EXPECT_LT(mean(380, 400), 0.5 * mean(0, 20));
}

TEST(Train, EmptyBatchIsAZeroLossStep) {
  RandomState init(6);
  Model m = build_model(tiny_config("M1x1", 30), init);
  AdamW opt(m.parameters());
  MlmBatch batch;
  MaskedSequence s;
  s.inputs = {5, 6};
  s.labels = {ops::kIgnoreLabel, ops::kIgnoreLabel};
  batch.sequences.push_back(s);
  RandomState rng(1);
  const auto r = train_step(m, batch, opt, {1e-3, 1, 10}, rng);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad_norm, 0.0);
  EXPECT_EQ(r.predicted_tokens, 0u);
}

TEST(Train, NonFiniteParameterAbortsNamingTheTensor) {
  RandomState init(7);
  Model m = build_model(tiny_config("M1x1", 30), init);
  m.blocks[0].first_layer.ffn_in_weight.data()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamW opt(m.parameters());
  MlmBatch batch;
  MaskedSequence s;
  s.inputs = {5, 6, 7};
  s.labels = {5, 6, 7};
  batch.sequences.push_back(s);
  RandomState rng(1);
  try {
    train_step(m, batch, opt, {1e-3, 1, 10}, rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("ffn.in_weight"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsBadOptions) {
  RandomState init(8);
  Model m = build_model(tiny_config("M1x1", 30), init);
  TrainOptions o;
  EXPECT_THROW(train(m, {}, o), ConfigError);
  o.batch_size = 0;
  EXPECT_THROW(train(m, {{5, 6}}, o), ConfigError);
  o.batch_size = 1;
  o.schedule = {1e-3, 0, 10};
  EXPECT_THROW(train(m, {{5, 6}}, o), ConfigError);
}

}  // namespace
}  // namespace lazyformer
