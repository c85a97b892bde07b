#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lazyformer/random.hpp"

namespace lazyformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A Tensor is a handle: copies share storage, `clone()` makes a deep copy.
/// Tensors flagged `requires_grad` take part in reverse-mode differentiation
/// when an op runs while a Tape is recording on the current thread.
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty means "no gradient yet"
    bool requires_grad = false;
    bool leaf = true;
  };

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor normal(Shape shape, double stddev, RandomState& rng);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient buffer; allocated (zero-filled) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  /// Deep copy of values and the requires_grad flag; gradient not copied.
  Tensor clone() const;
  /// Deep copy of values only, never tracked.
  Tensor detach() const;

  bool shares_storage(const Tensor& other) const noexcept {
    return impl_ == other.impl_;
  }

  const std::shared_ptr<Impl>& impl() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  friend Tensor make_tensor(std::shared_ptr<Impl>);

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable ops executed while recording.
///
/// Nodes are appended as ops execute, so inputs always precede the node that
/// consumes them. `backward` walks the nodes once in reverse order. A Tape is
/// confined to the thread that records into it.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Makes `tape` the recording tape of the current thread for its lifetime.
  class Recording {
   public:
    explicit Recording(Tape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() noexcept;

  void record(std::string_view op, const Tensor& output,
              std::initializer_list<Tensor> inputs, BackwardFn fn);

  /// Fills gradients of every tracked leaf reachable from `loss`.
  /// Leaf gradients accumulate across calls; intermediate ones are reset.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t i) const { return nodes_.at(i).op; }

 private:
  struct Node {
    std::string_view op;
    std::shared_ptr<Tensor::Impl> output;
    std::vector<std::shared_ptr<Tensor::Impl>> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// Counters maintained by the ops on the current thread.
struct OpCounters {
  /// Multiply-adds in matrix products (2 flops each) plus softmax work at
  /// `kSoftmaxFlopsPerElement` per element.
  std::uint64_t flops = 0;
  /// Number of n-by-n matrices passed through softmax_rows.
  std::uint64_t square_softmaxes = 0;
};

inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 5;

OpCounters& op_counters() noexcept;
void reset_op_counters() noexcept;

/// Non-finite checking of op outputs. On by default; when enabled an op that
/// produces NaN/Inf throws NumericError naming the op.
void set_finite_checks(bool enabled) noexcept;
bool finite_checks_enabled() noexcept;

/// Throws NumericError naming `what` if any value is NaN or infinite.
void check_finite(std::span<const double> values, std::string_view what);

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_bt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds `bias` [H] to every last-axis slice of `a` [..×H].
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor sum(const Tensor& a);

/// Softmax over the last axis, stabilized by subtracting the row max.
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);
/// Tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
Tensor gelu(const Tensor& x);

/// Rows of `table` [V×H] selected by `ids`; throws VocabError on bad ids.
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids);

inline constexpr std::int64_t kIgnoreLabel = -1;
/// Sum over rows with label != kIgnoreLabel of -log softmax(logits)[label].
Tensor cross_entropy_sum(const Tensor& logits,
                         std::span<const std::int64_t> labels);

/// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, RandomState& rng);

// Multi-head attention kernels. `heads` splits the last axis of [n×H]
// activations into contiguous blocks of d = H/heads columns.

/// out[h][o] = table[buckets[o]][h]; table is [num_buckets × heads].
Tensor gather_offset_bias(const Tensor& table,
                          std::span<const std::size_t> buckets);

/// [heads × n × n] logits: scale·Q_h·K_hᵀ plus, when `offset_bias`
/// [heads × (2n−1)] is defined, offset_bias[h][j − i + n − 1].
Tensor attention_logits(const Tensor& q, const Tensor& k, std::size_t heads,
                        double scale, const Tensor& offset_bias);

/// Per head: probs[h] [n×n] · V_h, heads concatenated back to [n×H].
Tensor attend(const Tensor& probs, const Tensor& v);

}  // namespace ops
}  // namespace lazyformer
