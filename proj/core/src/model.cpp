#include "lazyformer/model.hpp"

#include <numeric>

#include "lazyformer/error.hpp"

namespace lazyformer {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("invalid model config: " + why); };
  if (num_heads == 0) fail("num_heads must be >= 1");
  if (embed_dim == 0 || embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (ffn_width < embed_dim) {
    fail("ffn_width " + std::to_string(ffn_width) + " smaller than embed_dim " +
         std::to_string(embed_dim));
  }
  if (vocab_size == 0) fail("vocab_size must be >= 1");
  if (max_seq_len == 0) fail("max_seq_len must be >= 1");
  if (layout.num_blocks() == 0) fail("layout is empty");
  if (!(hidden_dropout_p >= 0.0 && hidden_dropout_p < 1.0)) {
    fail("hidden_dropout_p must be in [0, 1)");
  }
  if (num_rel_buckets < 2) fail("num_rel_buckets must be >= 2");
  if (rel_max_distance <= num_rel_buckets) fail("rel_max_distance must exceed num_rel_buckets");
}

namespace {

Tensor weight(Shape shape, RandomState& rng) {
  Tensor t = Tensor::normal(std::move(shape), kInitStddev, rng);
  t.set_requires_grad(true);
  return t;
}

Tensor filled(std::size_t size, double value) {
  Tensor t(Shape{size}, value);
  t.set_requires_grad(true);
  return t;
}

TransformerLayer build_layer(const ModelConfig& c, bool computing, RandomState& rng) {
  const std::size_t h = c.embed_dim;
  TransformerLayer layer;
  auto& attn = layer.attention;
  attn.heads = c.num_heads;
  if (computing) {
    attn.wq = weight({h, h}, rng);
    attn.bq = filled(h, 0.0);
    attn.wk = weight({h, h}, rng);
    attn.bk = filled(h, 0.0);
  }
  attn.wv = weight({h, h}, rng);
  attn.bv = filled(h, 0.0);
  attn.wo = weight({h, h}, rng);
  attn.bo = filled(h, 0.0);
  layer.attention_norm_gain = filled(h, 1.0);
  layer.attention_norm_bias = filled(h, 0.0);
  layer.ffn_in_weight = weight({h, c.ffn_width}, rng);
  layer.ffn_in_bias = filled(c.ffn_width, 0.0);
  layer.ffn_out_weight = weight({c.ffn_width, h}, rng);
  layer.ffn_out_bias = filled(h, 0.0);
  layer.ffn_norm_gain = filled(h, 1.0);
  layer.ffn_norm_bias = filled(h, 0.0);
  return layer;
}

void append_layer(std::vector<NamedTensor>& out, const std::string& prefix,
                  const TransformerLayer& layer) {
  const auto& a = layer.attention;
  if (a.computes_attention()) {
    out.push_back({prefix + "attention.wq", a.wq});
    out.push_back({prefix + "attention.bq", a.bq});
    out.push_back({prefix + "attention.wk", a.wk});
    out.push_back({prefix + "attention.bk", a.bk});
  }
  out.push_back({prefix + "attention.wv", a.wv});
  out.push_back({prefix + "attention.bv", a.bv});
  out.push_back({prefix + "attention.wo", a.wo});
  out.push_back({prefix + "attention.bo", a.bo});
  out.push_back({prefix + "attention_norm.gain", layer.attention_norm_gain});
  out.push_back({prefix + "attention_norm.bias", layer.attention_norm_bias});
  out.push_back({prefix + "ffn.in_weight", layer.ffn_in_weight});
  out.push_back({prefix + "ffn.in_bias", layer.ffn_in_bias});
  out.push_back({prefix + "ffn.out_weight", layer.ffn_out_weight});
  out.push_back({prefix + "ffn.out_bias", layer.ffn_out_bias});
  out.push_back({prefix + "ffn_norm.gain", layer.ffn_norm_gain});
  out.push_back({prefix + "ffn_norm.bias", layer.ffn_norm_bias});
}

Tensor maybe_dropout(const Tensor& x, double p, Mode mode, RandomState& rng) {
  if (mode != Mode::kTrain || p == 0.0) return x;
  return ops::dropout(x, p, rng);
}

// Residual + norm around attention, then the position-wise FFN.
Tensor finish_layer(const TransformerLayer& layer, const Tensor& input,
                    const Tensor& attention_out, double p, Mode mode, RandomState& rng) {
  const Tensor mid = ops::layer_norm(ops::add(input, maybe_dropout(attention_out, p, mode, rng)),
                                     layer.attention_norm_gain, layer.attention_norm_bias,
                                     kLayerNormEps);
  const Tensor inner =
      ops::gelu(ops::add_bias(ops::matmul(mid, layer.ffn_in_weight), layer.ffn_in_bias));
  const Tensor ffn = ops::add_bias(ops::matmul(inner, layer.ffn_out_weight), layer.ffn_out_bias);
  return ops::layer_norm(ops::add(mid, maybe_dropout(ffn, p, mode, rng)), layer.ffn_norm_gain,
                         layer.ffn_norm_bias, kLayerNormEps);
}

}  // namespace

Model build_model(const ModelConfig& config, RandomState& rng) {
  config.validate();
  const std::size_t h = config.embed_dim;
  Model model;
  model.config = config;
  model.token_embedding = weight({config.vocab_size, h}, rng);
  model.position_embedding = weight({config.max_seq_len, h}, rng);
  model.embedding_norm_gain = filled(h, 1.0);
  model.embedding_norm_bias = filled(h, 0.0);
  model.relative_bias =
      RelativeBias(weight({config.num_rel_buckets, config.num_heads}, rng), config.rel_max_distance);
  for (std::size_t m : config.layout.block_sizes()) {
    LazyBlock block;
    block.first_layer = build_layer(config, true, rng);
    for (std::size_t i = 1; i < m; ++i) block.rest.push_back(build_layer(config, false, rng));
    model.blocks.push_back(std::move(block));
  }
  model.output_bias = filled(config.vocab_size, 0.0);
  return model;
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"embeddings.token", token_embedding});
  out.push_back({"embeddings.position", position_embedding});
  out.push_back({"embeddings.norm.gain", embedding_norm_gain});
  out.push_back({"embeddings.norm.bias", embedding_norm_bias});
  out.push_back({"attention.relative_bias", relative_bias.table()});
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string block = "blocks." + std::to_string(b) + ".layers.";
    append_layer(out, block + "0.", blocks[b].first_layer);
    for (std::size_t l = 0; l < blocks[b].rest.size(); ++l) {
      append_layer(out, block + std::to_string(l + 1) + ".", blocks[b].rest[l]);
    }
  }
  out.push_back({"head.bias", output_bias});
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

ForwardResult forward(const Model& model, std::span<const std::int64_t> token_ids, Mode mode,
                      RandomState& rng, const ForwardOptions& options) {
  const auto& config = model.config;
  const std::size_t n = token_ids.size();
  if (n == 0) throw LengthError("empty token sequence");
  if (n > config.max_seq_len) {
    throw LengthError("sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                      std::to_string(config.max_seq_len));
  }
  const OpCounters before = op_counters();

  std::vector<std::int64_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::int64_t{0});
  const double p = config.hidden_dropout_p;
  Tensor x = ops::add(ops::embedding(model.token_embedding, token_ids),
                      ops::embedding(model.position_embedding, positions));
  x = ops::layer_norm(x, model.embedding_norm_gain, model.embedding_norm_bias, kLayerNormEps);
  x = maybe_dropout(x, p, mode, rng);

  const Tensor offset_bias = model.relative_bias.offset_bias(n);
  const DropoutPolicy attention_dropout{config.attention_dropout, p, mode == Mode::kTrain};

  ForwardResult result;
  for (const auto& block : model.blocks) {
    std::vector<Tensor> consumed;
    AttentionResult computed = compute_attention(x, block.first_layer.attention, offset_bias,
                                                 attention_dropout, rng, config.max_seq_len);
    ++result.stats.attention_computations;
    const AttentionCache cache = std::move(computed.cache);
    if (options.collect_attention) consumed.push_back(cache.probs);
    x = finish_layer(block.first_layer, x, computed.output, p, mode, rng);
    for (const auto& layer : block.rest) {
      const Tensor attended = reuse_attention(x, layer.attention, cache, attention_dropout, rng);
      if (options.collect_attention) consumed.push_back(cache.probs);
      x = finish_layer(layer, x, attended, p, mode, rng);
    }
    if (options.collect_attention) result.attention.push_back(std::move(consumed));
  }

  result.hidden = x;
  if (!options.skip_head) {
    result.logits = ops::add_bias(ops::matmul_bt(x, model.token_embedding), model.output_bias);
  }
  const OpCounters& after = op_counters();
  result.stats.softmax_nn_calls = after.square_softmaxes - before.square_softmaxes;
  result.stats.flops = after.flops - before.flops;
  return result;
}

}  // namespace lazyformer
