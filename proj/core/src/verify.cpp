#include "lazyformer/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lazyformer/error.hpp"
#include "lazyformer/optimizer.hpp"
#include "lazyformer/reference.hpp"

namespace lazyformer {

namespace {

std::vector<std::int64_t> random_ids(std::size_t n, std::size_t vocab, RandomState& rng) {
  std::vector<std::int64_t> ids(n);
  for (auto& id : ids) id = rng.uniform_int(0, static_cast<std::int64_t>(vocab) - 1);
  return ids;
}

ModelConfig tiny_config(Layout layout) {
  ModelConfig c;
  c.ffn_width = 32;
  c.embed_dim = 16;
  c.num_heads = 2;
  c.vocab_size = 50;
  c.max_seq_len = 16;
  c.layout = std::move(layout);
  return c;
}

double loss_value(const Model& model, std::span<const std::int64_t> ids, Mode mode,
                  std::uint64_t seed) {
  RandomState rng(seed);
  const auto out = forward(model, ids, mode, rng);
  return ops::cross_entropy_sum(out.logits, ids).item();
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

PropertyResult degenerate_layout(std::uint64_t seed) {
  RandomState init = RandomState(seed).derive(1);
  const Model model = build_model(tiny_config(Layout::uniform(1, 3)), init);
  const std::size_t lens[] = {1, 7, 16};
  const double diff = reference_max_abs_diff(model, lens, 3, seed);
  return {"degenerate-layout equivalence", diff < 1e-10,
          "max |logit diff| " + format_double(diff) + " (M1x3 vs reference)"};
}

PropertyResult gradients(std::uint64_t seed) {
  RandomState init = RandomState(seed).derive(2);
  ModelConfig config = tiny_config(Layout::uniform(2, 1));
  config.attention_dropout = true;
  Model model = build_model(config, init);
  RandomState data = RandomState(seed).derive(3);
  const auto ids = random_ids(9, config.vocab_size, data);
  double worst = 0.0;
  std::string worst_name;
  for (Mode mode : {Mode::kEval, Mode::kTrain}) {
    for (const auto& g : check_gradients(model, ids, mode, seed)) {
      if (g.relative_error >= worst) {
        worst = g.relative_error;
        worst_name = g.name;
      }
    }
  }
  return {"gradient check (M2x1, eval and train)", worst < 1e-4,
          "worst relative error " + format_double(worst) + " at " + worst_name};
}

PropertyResult masking(std::uint64_t seed) {
  MaskingPolicy policy;
  policy.vocab_size = 1000;
  const MaskingStats s = masking_statistics(policy, 100'000, seed);
  const bool ok = std::abs(s.selected_fraction() - 0.15) <= 0.01 &&
                  std::abs(s.mask_fraction() - 0.8) <= 0.02 &&
                  std::abs(s.random_fraction() - 0.1) <= 0.02 &&
                  std::abs(s.keep_fraction() - 0.1) <= 0.02;
  std::ostringstream d;
  d.precision(4);
  d << "selected " << s.selected_fraction() << ", mask/random/keep " << s.mask_fraction() << '/'
    << s.random_fraction() << '/' << s.keep_fraction();
  return {"masking statistics", ok, d.str()};
}

PropertyResult schedule() {
  const LrSchedule s{1e-3, 10, 100};
  bool ok = lr_at(0, s) == 0.0 && lr_at(10, s) == 1e-3 && lr_at(100, s) == 0.0 &&
            lr_at(150, s) == 0.0;
  ok = ok && lr_at(5, s) == 1e-3 * 5.0 / 10.0 && lr_at(55, s) == 1e-3 * 45.0 / 90.0;
  return {"lr schedule endpoints", ok, "warmup 10, max 100, peak 1e-3"};
}

PropertyResult lazy_count(std::uint64_t seed) {
  const std::vector<std::vector<std::size_t>> layouts = {{1, 1, 1, 1}, {2, 2}, {4}, {3, 1}};
  std::ostringstream d;
  bool ok = true;
  for (const auto& sizes : layouts) {
    ModelConfig config = tiny_config(Layout(sizes));
    const auto got = count_square_softmaxes(config, 8, seed);
    const auto want = sizes.size() * config.num_heads;
    ok = ok && got == want;
    d << config.layout.to_string() << ' ' << got << '/' << want << "; ";
  }
  return {"lazy-count law", ok, d.str()};
}

PropertyResult cache_identity(std::uint64_t seed) {
  RandomState init = RandomState(seed).derive(4);
  const Model model = build_model(tiny_config(Layout({2})), init);
  RandomState data = RandomState(seed).derive(5);
  const std::size_t n = 8;
  const Tensor x = Tensor::normal({n, model.config.embed_dim}, 1.0, data);
  const auto& first = model.blocks[0].first_layer.attention;
  const auto& second = model.blocks[0].rest[0].attention;
  RandomState rng(seed);
  const auto computed = compute_attention(x, first, model.relative_bias.offset_bias(n), {}, rng);
  const Tensor reused = reuse_attention(x, second, computed.cache, {}, rng);
  const Tensor v = ops::add_bias(ops::matmul(x, second.wv), second.bv);
  const Tensor expected =
      ops::add_bias(ops::matmul(ops::attend(computed.cache.probs, v), second.wo), second.bo);
  double diff = 0.0;
  for (std::size_t i = 0; i < expected.numel(); ++i) {
    diff = std::max(diff, std::abs(expected.at(i) - reused.at(i)));
  }
  return {"reuse consumes the cached distribution", diff < 1e-12,
          "max |diff| " + format_double(diff)};
}

}  // namespace

double reference_max_abs_diff(const Model& model, std::span<const std::size_t> seq_lens,
                              std::size_t trials, std::uint64_t seed) {
  RandomState data = RandomState(seed).derive(11);
  double worst = 0.0;
  for (auto n : seq_lens) {
    for (std::size_t t = 0; t < trials; ++t) {
      const auto ids = random_ids(n, model.config.vocab_size, data);
      RandomState rng(seed);
      const auto out = forward(model, ids, Mode::kEval, rng);
      const auto ref = reference::forward_logits(model, ids);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < model.config.vocab_size; ++v) {
          worst = std::max(worst, std::abs(out.logits.at(i, v) - ref[i][v]));
        }
      }
    }
  }
  return worst;
}

std::vector<GradientCheck> check_gradients(Model& model, std::span<const std::int64_t> ids,
                                           Mode mode, std::uint64_t seed, double step) {
  model.zero_grad();
  {
    Tape tape;
    Tensor loss;
    {
      Tape::Recording recording(tape);
      RandomState rng(seed);
      const auto out = forward(model, ids, mode, rng);
      loss = ops::cross_entropy_sum(out.logits, ids);
    }
    tape.backward(loss);
  }

  std::vector<GradientCheck> checks;
  for (auto& p : model.parameters()) {
    auto values = p.tensor.data();
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    GradientCheck check;
    check.name = p.name;
    double scale = 1e-8;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_value(model, ids, mode, seed);
      values[i] = saved - step;
      const double down = loss_value(model, ids, mode, seed);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      check.max_abs_error = std::max(check.max_abs_error, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
    }
    check.relative_error = check.max_abs_error / scale;
    checks.push_back(std::move(check));
  }
  model.zero_grad();
  return checks;
}

double MaskingStats::selected_fraction() const {
  return positions ? static_cast<double>(selected) / static_cast<double>(positions) : 0.0;
}
double MaskingStats::mask_fraction() const {
  return selected ? static_cast<double>(masked) / static_cast<double>(selected) : 0.0;
}
double MaskingStats::random_fraction() const {
  return selected ? static_cast<double>(randomized) / static_cast<double>(selected) : 0.0;
}
double MaskingStats::keep_fraction() const {
  return selected ? static_cast<double>(kept) / static_cast<double>(selected) : 0.0;
}

MaskingStats masking_statistics(const MaskingPolicy& policy, std::size_t positions,
                                std::uint64_t seed) {
  RandomState rng = RandomState(seed).derive(21);
  RandomState tokens = RandomState(seed).derive(22);
  MaskingStats stats;
  while (stats.positions < positions) {
    const std::size_t n = std::min<std::size_t>(128, positions - stats.positions);
    std::vector<std::int64_t> window(n);
    for (auto& id : window) {
      id = tokens.uniform_int(policy.first_regular_id,
                              static_cast<std::int64_t>(policy.vocab_size) - 1);
    }
    const auto masked = apply_masking(window, policy, rng);
    for (auto action : masked.actions) {
      switch (action) {
        case MaskAction::kMask: ++stats.masked; break;
        case MaskAction::kRandom: ++stats.randomized; break;
        case MaskAction::kKeep: ++stats.kept; break;
        case MaskAction::kNone: break;
      }
    }
    stats.positions += n;
  }
  stats.selected = stats.masked + stats.randomized + stats.kept;
  return stats;
}

std::uint64_t count_square_softmaxes(const ModelConfig& config, std::size_t n,
                                     std::uint64_t seed) {
  RandomState init = RandomState(seed).derive(31);
  const Model model = build_model(config, init);
  RandomState data = RandomState(seed).derive(32);
  const auto ids = random_ids(n, config.vocab_size, data);
  RandomState rng(seed);
  ForwardOptions options;
  options.skip_head = true;
  return forward(model, ids, Mode::kEval, rng, options).stats.softmax_nn_calls;
}

std::vector<PropertyResult> run_verify(std::uint64_t seed) {
  std::vector<PropertyResult> results;
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      results.push_back(fn());
    } catch (const std::exception& e) {
      results.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("degenerate-layout equivalence", [&] { return degenerate_layout(seed); });
  guarded("gradient check", [&] { return gradients(seed); });
  guarded("masking statistics", [&] { return masking(seed); });
  guarded("lr schedule endpoints", [&] { return schedule(); });
  guarded("lazy-count law", [&] { return lazy_count(seed); });
  guarded("reuse consumes the cached distribution", [&] { return cache_identity(seed); });
  return results;
}

}  // namespace lazyformer
