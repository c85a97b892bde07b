#include <algorithm>
#include <cmath>
#include <numbers>

#include "autograd.hpp"
#include "gemm.hpp"
#include "lazyformer/error.hpp"
#include "lazyformer/tensor.hpp"

namespace lazyformer::ops {

using detail::ConstMatrix;
using detail::MutMatrix;
using detail::finish;
using detail::grad_of;
using detail::new_result;
using detail::should_record;

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         shape_string(t.shape()));
  }
}

ConstMatrix view(const Tensor& t) {
  return {t.data().data(), t.dim(0), t.dim(1), t.dim(1)};
}

ConstMatrix view(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return {data.data(), rows, cols, cols};
}

MutMatrix mut(std::span<double> data, std::size_t rows, std::size_t cols) {
  return {data.data(), rows, cols, cols};
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  Tensor out = new_result({p, r});
  detail::gemm(view(a), false, view(b), false, mut(out.data(), p, r), false);
  finish(out, "matmul");
  if (should_record({&a, &b})) {
    Tape::active()->record("matmul", out, {a, b}, [a, b, out, p, q, r] {
      auto dc = view(grad_of(out), p, r);
      if (a.requires_grad()) {
        detail::gemm(dc, false, view(b), true, mut(grad_of(a), p, q), true);
      }
      if (b.requires_grad()) {
        detail::gemm(view(a), true, dc, false, mut(grad_of(b), q, r), true);
      }
    });
  }
  return out;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_bt");
  require_matrix(b, "matmul_bt");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_bt shape mismatch: " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()) + "^T");
  }
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(0);
  Tensor out = new_result({p, r});
  detail::gemm(view(a), false, view(b), true, mut(out.data(), p, r), false);
  finish(out, "matmul_bt");
  if (should_record({&a, &b})) {
    Tape::active()->record("matmul_bt", out, {a, b}, [a, b, out, p, q, r] {
      auto dc = view(grad_of(out), p, r);
      if (a.requires_grad()) {
        detail::gemm(dc, false, view(b), false, mut(grad_of(a), p, q), true);
      }
      if (b.requires_grad()) {
        detail::gemm(dc, true, view(a), false, mut(grad_of(b), r, q), true);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor out = new_result({cols, rows});
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
  }
  if (should_record({&a})) {
    Tape::active()->record("transpose", out, {a}, [a, out, rows, cols] {
      auto g = grad_of(out);
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += g[j * rows + i];
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out = new_result(a.shape());
  auto x = a.data(), y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  finish(out, "add");
  if (should_record({&a, &b})) {
    Tape::active()->record("add", out, {a, b}, [a, b, out] {
      auto g = grad_of(out);
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = grad_of(*t);
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out = new_result(a.shape());
  auto x = a.data(), y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  finish(out, "mul");
  if (should_record({&a, &b})) {
    Tape::active()->record("mul", out, {a, b}, [a, b, out] {
      auto g = grad_of(out);
      auto x = a.data(), y = b.data();
      if (a.requires_grad()) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = new_result(a.shape());
  auto x = a.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * factor;
  finish(out, "scale");
  if (should_record({&a})) {
    Tape::active()->record("scale", out, {a}, [a, out, factor] {
      auto g = grad_of(out);
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.rank() != 1 || bias.dim(0) != last_dim(a)) {
    throw DimensionError("add_bias shape mismatch: " + shape_string(a.shape()) +
                         " + " + shape_string(bias.shape()));
  }
  const std::size_t width = bias.dim(0);
  const std::size_t rows = a.numel() / width;
  Tensor out = new_result(a.shape());
  auto x = a.data(), b = bias.data();
  auto z = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) z[r * width + c] = x[r * width + c] + b[c];
  }
  finish(out, "add_bias");
  if (should_record({&a, &bias})) {
    Tape::active()->record("add_bias", out, {a, bias}, [a, bias, out, rows, width] {
      auto g = grad_of(out);
      if (a.requires_grad()) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = grad_of(bias);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < width; ++c) gb[c] += g[r * width + c];
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor out = new_result({1});
  out.data()[0] = total;
  finish(out, "sum");
  if (should_record({&a})) {
    Tape::active()->record("sum", out, {a}, [a, out] {
      const double g = grad_of(out)[0];
      auto ga = grad_of(a);
      for (auto& v : ga) v += g;
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t width = last_dim(a);
  const std::size_t rows = a.numel() / width;
  if (a.rank() >= 2 && a.shape()[a.rank() - 2] == width) {
    op_counters().square_softmaxes += rows / width;
  }
  op_counters().flops += kSoftmaxFlopsPerElement * a.numel();

  Tensor out = new_result(a.shape());
  auto x = a.data();
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * width;
    double* o = y.data() + r * width;
    const double peak = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < width; ++c) o[c] *= inv;
  }
  finish(out, "softmax_rows");
  if (should_record({&a})) {
    Tape::active()->record("softmax_rows", out, {a}, [a, out, rows, width] {
      auto g = grad_of(out);
      auto y = out.data();
      auto ga = grad_of(a);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * width;
        double dot = 0.0;
        for (std::size_t c = 0; c < width; ++c) dot += g[base + c] * y[base + c];
        for (std::size_t c = 0; c < width; ++c) {
          ga[base + c] += y[base + c] * (g[base + c] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps >= 0.0)) throw ContractError("layer_norm eps must be non-negative");
  const std::size_t width = last_dim(x);
  if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != width ||
      bias.dim(0) != width) {
    throw DimensionError("layer_norm parameter mismatch for input " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / width;
  Tensor out = new_result(x.shape());
  std::vector<double> normalized(x.numel());
  std::vector<double> rstd(rows);
  auto in = x.data(), g = gain.data(), b = bias.data();
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) mean += row[c];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(width);
    const double denom = var + eps;
    // Zero-variance rows normalize to zero rather than 0/0.
    const double s = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    rstd[r] = s;
    for (std::size_t c = 0; c < width; ++c) {
      const double h = (row[c] - mean) * s;
      normalized[r * width + c] = h;
      y[r * width + c] = h * g[c] + b[c];
    }
  }
  finish(out, "layer_norm");
  if (should_record({&x, &gain, &bias})) {
    Tape::active()->record(
        "layer_norm", out, {x, gain, bias},
        [x, gain, bias, out, rows, width, normalized = std::move(normalized),
         rstd = std::move(rstd)] {
          auto dy = grad_of(out);
          auto g = gain.data();
          if (gain.requires_grad()) {
            auto dg = grad_of(gain);
            for (std::size_t i = 0; i < dy.size(); ++i) dg[i % width] += dy[i] * normalized[i];
          }
          if (bias.requires_grad()) {
            auto db = grad_of(bias);
            for (std::size_t i = 0; i < dy.size(); ++i) db[i % width] += dy[i];
          }
          if (!x.requires_grad()) return;
          auto dx = grad_of(x);
          const double inv_w = 1.0 / static_cast<double>(width);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
              const std::size_t i = r * width + c;
              const double dh = dy[i] * g[c];
              mean_dh += dh;
              mean_dh_h += dh * normalized[i];
            }
            mean_dh *= inv_w;
            mean_dh_h *= inv_w;
            for (std::size_t c = 0; c < width; ++c) {
              const std::size_t i = r * width + c;
              const double dh = dy[i] * g[c];
              dx[i] += rstd[r] * (dh - mean_dh - normalized[i] * mean_dh_h);
            }
          }
        });
  }
  return out;
}

namespace {
constexpr double kGeluCubic = 0.044715;
const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor out = new_result(x.shape());
  auto in = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = in[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluScale * (v + kGeluCubic * v * v * v)));
  }
  finish(out, "gelu");
  if (should_record({&x})) {
    Tape::active()->record("gelu", out, {x}, [x, out] {
      auto g = grad_of(out);
      auto in = x.data();
      auto dx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = in[i];
        const double t = std::tanh(kGeluScale * (v + kGeluCubic * v * v * v));
        const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
        dx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids) {
  require_matrix(table, "embedding");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  if (ids.empty()) throw DimensionError("embedding lookup of an empty sequence");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw VocabError("token id " + std::to_string(ids[i]) + " at position " +
                       std::to_string(i) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
  }
  Tensor out = new_result({ids.size(), width});
  auto src = table.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(src.data() + static_cast<std::size_t>(ids[i]) * width, width,
                dst.data() + i * width);
  }
  if (should_record({&table})) {
    std::vector<std::int64_t> rows(ids.begin(), ids.end());
    Tape::active()->record("embedding", out, {table}, [table, out, rows = std::move(rows), width] {
      auto g = grad_of(out);
      auto gt = grad_of(table);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double* dst = gt.data() + static_cast<std::size_t>(rows[i]) * width;
        const double* src = g.data() + i * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

Tensor cross_entropy_sum(const Tensor& logits, std::span<const std::int64_t> labels) {
  require_matrix(logits, "cross_entropy_sum");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy_sum: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] != kIgnoreLabel &&
        (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)) {
      throw VocabError("label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside " + std::to_string(classes) +
                       " classes");
    }
  }
  auto z = logits.data();
  std::vector<double> probs(z.size(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] == kIgnoreLabel) continue;
    const double* row = z.data() + r * classes;
    const double peak = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(row[c] - peak);
      denom += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= denom;
    total += std::log(denom) + peak - row[static_cast<std::size_t>(labels[r])];
  }
  Tensor out = new_result({1});
  out.data()[0] = total;
  finish(out, "cross_entropy_sum");
  if (should_record({&logits})) {
    std::vector<std::int64_t> targets(labels.begin(), labels.end());
    Tape::active()->record(
        "cross_entropy_sum", out, {logits},
        [logits, out, probs = std::move(probs), targets = std::move(targets), classes] {
          const double g = grad_of(out)[0];
          auto dz = grad_of(logits);
          for (std::size_t r = 0; r < targets.size(); ++r) {
            if (targets[r] == kIgnoreLabel) continue;
            for (std::size_t c = 0; c < classes; ++c) {
              dz[r * classes + c] += g * probs[r * classes + c];
            }
            dz[r * classes + static_cast<std::size_t>(targets[r])] -= g;
          }
        });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, RandomState& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout probability must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor out = new_result(x.shape());
  auto in = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[i] * mask[i];
  if (should_record({&x})) {
    Tape::active()->record("dropout", out, {x}, [x, out, mask = std::move(mask)] {
      auto g = grad_of(out);
      auto dx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
    });
  }
  return out;
}

}  // namespace lazyformer::ops
