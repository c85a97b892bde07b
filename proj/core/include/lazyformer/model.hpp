#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lazyformer/attention.hpp"
#include "lazyformer/layout.hpp"
#include "lazyformer/random.hpp"
#include "lazyformer/tensor.hpp"

namespace lazyformer {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStddev = 0.02;

/// Architecture of a LazyFormer encoder. (W, H, N) = (ffn_width, embed_dim,
/// num_heads).
struct ModelConfig {
  std::size_t ffn_width = 512;
  std::size_t embed_dim = 128;
  std::size_t num_heads = 4;
  std::size_t vocab_size = 1024;
  std::size_t max_seq_len = 128;
  Layout layout = Layout::uniform(1, 4);
  bool attention_dropout = false;
  double hidden_dropout_p = 0.1;
  std::size_t num_rel_buckets = 32;
  std::size_t rel_max_distance = 128;

  /// Throws ConfigError on any invariant violation.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Post-LN transformer layer: x → LN(x + attn(x)) → LN(· + FFN(·)).
struct TransformerLayer {
  AttentionParams attention;
  Tensor attention_norm_gain, attention_norm_bias;
  Tensor ffn_in_weight, ffn_in_bias;    // [H×W], [W]
  Tensor ffn_out_weight, ffn_out_bias;  // [W×H], [H]
  Tensor ffn_norm_gain, ffn_norm_bias;
};

/// m layers sharing one attention distribution: `first_layer` computes it
/// from the block input, the m−1 layers in `rest` reuse it.
struct LazyBlock {
  TransformerLayer first_layer;
  std::vector<TransformerLayer> rest;

  std::size_t size() const noexcept { return 1 + rest.size(); }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Encoder plus a masked-LM head tied to the token embedding.
struct Model {
  ModelConfig config;
  Tensor token_embedding;     // [V×H], also the output projection
  Tensor position_embedding;  // [max_seq_len×H]
  Tensor embedding_norm_gain, embedding_norm_bias;
  RelativeBias relative_bias;  // shared by every computing layer
  std::vector<LazyBlock> blocks;
  Tensor output_bias;  // [V]

  /// Every parameter tensor, in declaration order. Handles share storage
  /// with the model.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

/// All weights N(0, 0.02²), biases zero, norms at gain 1 / bias 0.
Model build_model(const ModelConfig& config, RandomState& rng);

enum class Mode { kEval, kTrain };

struct ForwardStats {
  std::size_t attention_computations = 0;
  /// n×n softmaxes executed during this forward (one per head per
  /// computing layer).
  std::uint64_t softmax_nn_calls = 0;
  std::uint64_t flops = 0;
};

struct ForwardOptions {
  /// Record, per block and layer, the distribution each layer attended with.
  bool collect_attention = false;
  /// Skip the vocabulary projection (logits stay undefined).
  bool skip_head = false;
};

struct ForwardResult {
  Tensor logits;  // [n×V]
  Tensor hidden;  // [n×H], final layer output
  ForwardStats stats;
  std::vector<std::vector<Tensor>> attention;  // [block][layer], if collected
};

/// Runs the encoder over one sequence. Throws LengthError when the sequence
/// is empty or longer than max_seq_len and VocabError on out-of-range ids.
ForwardResult forward(const Model& model, std::span<const std::int64_t> token_ids, Mode mode,
                      RandomState& rng, const ForwardOptions& options = {});

}  // namespace lazyformer
