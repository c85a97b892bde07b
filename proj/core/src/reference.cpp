#include "lazyformer/reference.hpp"

#include <cmath>
#include <numbers>

#include "lazyformer/error.hpp"

namespace lazyformer::reference {

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix linear(const Matrix& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  auto wd = w.data();
  auto bd = b.data();
  Matrix y(x.size(), std::vector<double>(out));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bd[o];
      for (std::size_t c = 0; c < in; ++c) acc += x[i][c] * wd[c * out + o];
      y[i][o] = acc;
    }
  }
  return y;
}

void layer_norm(Matrix& x, const Tensor& gain, const Tensor& bias) {
  auto g = gain.data();
  auto b = bias.data();
  for (auto& row : x) {
    const double w = static_cast<double>(row.size());
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= w;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= w;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean) * inv * g[c] + b[c];
  }
}

double gelu(double v) {
  return 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (v + 0.044715 * v * v * v)));
}

// probs[h][i][j]
using Distribution = std::vector<Matrix>;

Distribution attention_distribution(const Matrix& x, const Model& model,
                                    const AttentionParams& p) {
  const std::size_t n = x.size();
  const std::size_t heads = p.heads;
  const std::size_t d = x[0].size() / heads;
  const Matrix q = linear(x, p.wq, p.bq);
  const Matrix k = linear(x, p.wk, p.bk);
  const auto& table = model.relative_bias.table();
  Distribution probs(heads, Matrix(n, std::vector<double>(n)));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n);
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += q[i][h * d + c] * k[j][h * d + c];
        const auto offset = static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i);
        const std::size_t bucket = t5_bucket(offset, model.relative_bias.num_buckets(),
                                             model.relative_bias.max_distance());
        logits[j] = dot / std::sqrt(static_cast<double>(d)) + table.at(bucket, h);
      }
      double peak = logits[0];
      for (double v : logits) peak = std::max(peak, v);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        probs[h][i][j] = std::exp(logits[j] - peak);
        total += probs[h][i][j];
      }
      for (std::size_t j = 0; j < n; ++j) probs[h][i][j] /= total;
    }
  }
  return probs;
}

Matrix layer(const Matrix& x, const Model& model, const TransformerLayer& layer,
             Distribution& current) {
  const auto& p = layer.attention;
  if (p.computes_attention()) current = attention_distribution(x, model, p);
  const std::size_t n = x.size();
  const std::size_t width = x[0].size();
  const std::size_t d = width / p.heads;
  const Matrix v = linear(x, p.wv, p.bv);
  Matrix context(n, std::vector<double>(width, 0.0));
  for (std::size_t h = 0; h < p.heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < d; ++c) {
          context[i][h * d + c] += current[h][i][j] * v[j][h * d + c];
        }
      }
    }
  }
  Matrix attended = linear(context, p.wo, p.bo);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < width; ++c) attended[i][c] += x[i][c];
  }
  layer_norm(attended, layer.attention_norm_gain, layer.attention_norm_bias);
  Matrix inner = linear(attended, layer.ffn_in_weight, layer.ffn_in_bias);
  for (auto& row : inner) {
    for (auto& v : row) v = gelu(v);
  }
  Matrix out = linear(inner, layer.ffn_out_weight, layer.ffn_out_bias);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < width; ++c) out[i][c] += attended[i][c];
  }
  layer_norm(out, layer.ffn_norm_gain, layer.ffn_norm_bias);
  return out;
}

}  // namespace

std::size_t t5_bucket(std::int64_t offset, std::size_t num_buckets, std::size_t max_distance) {
  const std::size_t per_sign = num_buckets / 2;
  const std::size_t base = offset > 0 ? per_sign : 0;
  const std::size_t distance = static_cast<std::size_t>(offset < 0 ? -offset : offset);
  const std::size_t exact = std::max<std::size_t>(per_sign / 2, 1);
  if (distance < exact) return base + distance;
  // Largest k whose log-spaced lower edge exact·(max/exact)^(k/(per_sign−exact))
  // does not exceed the distance.
  const double growth = static_cast<double>(max_distance) / static_cast<double>(exact);
  const std::size_t log_buckets = per_sign - exact;
  std::size_t k = 0;
  while (k + 1 < log_buckets) {
    const double edge = static_cast<double>(exact) *
                        std::pow(growth, static_cast<double>(k + 1) / static_cast<double>(log_buckets));
    if (edge > static_cast<double>(distance) * (1.0 + 1e-12)) break;
    ++k;
  }
  return base + exact + k;
}

std::vector<std::vector<double>> forward_logits(const Model& model,
                                                std::span<const std::int64_t> token_ids) {
  const auto& c = model.config;
  const std::size_t n = token_ids.size();
  if (n == 0 || n > c.max_seq_len) throw LengthError("reference forward: bad sequence length");
  const std::size_t width = c.embed_dim;
  Matrix x(n, std::vector<double>(width));
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw VocabError("reference forward: token id out of range");
    }
    for (std::size_t k = 0; k < width; ++k) {
      x[i][k] = model.token_embedding.at(static_cast<std::size_t>(id), k) +
                model.position_embedding.at(i, k);
    }
  }
  layer_norm(x, model.embedding_norm_gain, model.embedding_norm_bias);

  Distribution current;
  for (const auto& block : model.blocks) {
    x = layer(x, model, block.first_layer, current);
    for (const auto& rest : block.rest) x = layer(x, model, rest, current);
  }

  Matrix logits(n, std::vector<double>(c.vocab_size));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t v = 0; v < c.vocab_size; ++v) {
      double acc = model.output_bias.at(v);
      for (std::size_t k = 0; k < width; ++k) acc += x[i][k] * model.token_embedding.at(v, k);
      logits[i][v] = acc;
    }
  }
  return logits;
}

}  // namespace lazyformer::reference
