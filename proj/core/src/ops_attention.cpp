// Multi-head attention kernels operating on per-head column blocks in place.

#include <algorithm>

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

// Column block of head `h` inside an [n×H] row-major buffer.
ConstMatrix head_block(std::span<const double> data, std::size_t n, std::size_t width,
                       std::size_t d, std::size_t h) {
  return {data.data() + h * d, n, d, width};
}

MutMatrix head_block(std::span<double> data, std::size_t n, std::size_t width,
                     std::size_t d, std::size_t h) {
  return {data.data() + h * d, n, d, width};
}

ConstMatrix square(std::span<const double> data, std::size_t n, std::size_t h) {
  return {data.data() + h * n * n, n, n, n};
}

MutMatrix square(std::span<double> data, std::size_t n, std::size_t h) {
  return {data.data() + h * n * n, n, n, n};
}

}  // namespace

Tensor gather_offset_bias(const Tensor& table, std::span<const std::size_t> buckets) {
  if (table.rank() != 2) {
    throw DimensionError("gather_offset_bias expects a [buckets x heads] table, got " +
                         shape_string(table.shape()));
  }
  const std::size_t num_buckets = table.dim(0), heads = table.dim(1);
  const std::size_t offsets = buckets.size();
  for (auto b : buckets) {
    if (b >= num_buckets) throw DimensionError("bucket index out of range");
  }
  Tensor out = new_result({heads, offsets});
  auto src = table.data();
  auto dst = out.data();
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t o = 0; o < offsets; ++o) dst[h * offsets + o] = src[buckets[o] * heads + h];
  }
  if (should_record({&table})) {
    std::vector<std::size_t> index(buckets.begin(), buckets.end());
    Tape::active()->record("gather_offset_bias", out, {table},
                           [table, out, index = std::move(index), heads] {
                             auto g = grad_of(out);
                             auto gt = grad_of(table);
                             const std::size_t offsets = index.size();
                             for (std::size_t h = 0; h < heads; ++h) {
                               for (std::size_t o = 0; o < offsets; ++o) {
                                 gt[index[o] * heads + h] += g[h * offsets + o];
                               }
                             }
                           });
  }
  return out;
}

Tensor attention_logits(const Tensor& q, const Tensor& k, std::size_t heads, double scale,
                        const Tensor& offset_bias) {
  if (q.rank() != 2 || q.shape() != k.shape()) {
    throw DimensionError("attention_logits expects matching [n x H] inputs, got " +
                         shape_string(q.shape()) + " and " + shape_string(k.shape()));
  }
  const std::size_t n = q.dim(0), width = q.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("hidden width " + std::to_string(width) +
                         " not divisible by head count " + std::to_string(heads));
  }
  const bool has_bias = offset_bias.defined();
  if (has_bias && offset_bias.shape() != Shape{heads, 2 * n - 1}) {
    throw DimensionError("offset bias " + shape_string(offset_bias.shape()) +
                         " does not match " + std::to_string(heads) + " heads, n=" +
                         std::to_string(n));
  }
  const std::size_t d = width / heads;
  Tensor out = new_result({heads, n, n});
  auto logits = out.data();
  for (std::size_t h = 0; h < heads; ++h) {
    detail::gemm(head_block(q.data(), n, width, d, h), false,
                 head_block(k.data(), n, width, d, h), true, square(logits, n, h), false,
                 scale);
    if (has_bias) {
      const double* bias = offset_bias.data().data() + h * (2 * n - 1);
      double* block = logits.data() + h * n * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double* row_bias = bias + (n - 1 - i);
        double* row = block + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += row_bias[j];
      }
    }
  }
  finish(out, "attention_logits");
  if (should_record({&q, &k, &offset_bias})) {
    Tape::active()->record(
        "attention_logits", out, {q, k, offset_bias},
        [q, k, offset_bias, out, heads, scale, n, width, d, has_bias] {
          auto g = grad_of(out);
          for (std::size_t h = 0; h < heads; ++h) {
            const ConstMatrix dl = square(std::span<const double>(g), n, h);
            if (q.requires_grad()) {
              detail::gemm(dl, false, head_block(k.data(), n, width, d, h), false,
                           head_block(grad_of(q), n, width, d, h), true, scale);
            }
            if (k.requires_grad()) {
              detail::gemm(dl, true, head_block(q.data(), n, width, d, h), false,
                           head_block(grad_of(k), n, width, d, h), true, scale);
            }
          }
          if (has_bias && offset_bias.requires_grad()) {
            auto gb = grad_of(offset_bias);
            for (std::size_t h = 0; h < heads; ++h) {
              double* bias = gb.data() + h * (2 * n - 1);
              const double* block = g.data() + h * n * n;
              for (std::size_t i = 0; i < n; ++i) {
                double* row_bias = bias + (n - 1 - i);
                const double* row = block + i * n;
                for (std::size_t j = 0; j < n; ++j) row_bias[j] += row[j];
              }
            }
          }
        });
  }
  return out;
}

Tensor attend(const Tensor& probs, const Tensor& v) {
  if (probs.rank() != 3 || probs.dim(1) != probs.dim(2) || v.rank() != 2 ||
      v.dim(0) != probs.dim(1) || v.dim(1) % probs.dim(0) != 0) {
    throw DimensionError("attend shape mismatch: " + shape_string(probs.shape()) + " with " +
                         shape_string(v.shape()));
  }
  const std::size_t heads = probs.dim(0), n = v.dim(0), width = v.dim(1);
  const std::size_t d = width / heads;
  Tensor out = new_result({n, width});
  for (std::size_t h = 0; h < heads; ++h) {
    detail::gemm(square(probs.data(), n, h), false, head_block(v.data(), n, width, d, h),
                 false, head_block(out.data(), n, width, d, h), false);
  }
  finish(out, "attend");
  if (should_record({&probs, &v})) {
    Tape::active()->record("attend", out, {probs, v}, [probs, v, out, heads, n, width, d] {
      auto g = std::span<const double>(grad_of(out));
      for (std::size_t h = 0; h < heads; ++h) {
        const ConstMatrix dout = head_block(g, n, width, d, h);
        if (probs.requires_grad()) {
          detail::gemm(dout, false, head_block(v.data(), n, width, d, h), true,
                       square(grad_of(probs), n, h), true);
        }
        if (v.requires_grad()) {
          detail::gemm(square(probs.data(), n, h), true, dout, false,
                       head_block(grad_of(v), n, width, d, h), true);
        }
      }
    });
  }
  return out;
}

}  // namespace lazyformer::ops
