#include "lazyformer/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "autograd.hpp"
#include "lazyformer/error.hpp"

namespace lazyformer {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local OpCounters g_counters;
std::atomic<bool> g_finite_checks{true};

void require_defined(const std::shared_ptr<Tensor::Impl>& impl) {
  if (!impl) throw ContractError("use of an undefined tensor");
}

}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor make_tensor(std::shared_ptr<Tensor::Impl> impl) {
  return Tensor(std::move(impl));
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in " + shape_string(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::normal(Shape shape, double stddev, RandomState& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.impl_->data) v = rng.normal(0.0, stddev);
  return t;
}

const Shape& Tensor::shape() const {
  require_defined(impl_);
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const {
  require_defined(impl_);
  return impl_->data.size();
}

std::span<double> Tensor::data() {
  require_defined(impl_);
  return impl_->data;
}

std::span<const double> Tensor::data() const {
  require_defined(impl_);
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw DimensionError("at(i, j) needs a matrix");
  return impl_->data[i * impl_->shape[1] + j];
}

bool Tensor::requires_grad() const {
  require_defined(impl_);
  return impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool on) {
  require_defined(impl_);
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const {
  require_defined(impl_);
  return !impl_->grad.empty();
}

std::span<double> Tensor::grad() {
  require_defined(impl_);
  return detail::grad_buffer(*impl_);
}

std::span<const double> Tensor::grad() const {
  require_defined(impl_);
  return detail::grad_buffer(*impl_);
}

void Tensor::zero_grad() {
  require_defined(impl_);
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  require_defined(impl_);
  Tensor out(impl_->shape, impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tensor Tensor::detach() const {
  require_defined(impl_);
  return Tensor(impl_->shape, impl_->data);
}

// --- Tape -------------------------------------------------------------------

Tape::Recording::Recording(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

Tape::Recording::~Recording() { g_active_tape = previous_; }

Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::record(std::string_view op, const Tensor& output,
                  std::initializer_list<Tensor> inputs, BackwardFn fn) {
  Node node;
  node.op = op;
  node.output = output.impl();
  node.output->leaf = false;
  node.output->requires_grad = true;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.defined()) node.inputs.push_back(in.impl());
  }
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  const auto it = std::find_if(nodes_.begin(), nodes_.end(), [&](const Node& n) {
    return n.output == loss.impl();
  });
  if (it == nodes_.end()) {
    throw ContractError("backward() loss was not produced on this tape");
  }
  for (auto& node : nodes_) node.output->grad.clear();
  loss.impl()->grad.assign(1, 1.0);
  const auto loss_index = static_cast<std::size_t>(it - nodes_.begin());
  for (std::size_t i = loss_index + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.output->grad.empty()) continue;
    node.backward();
  }
}

void Tape::clear() { nodes_.clear(); }

// --- instrumentation ---------------------------------------------------------

OpCounters& op_counters() noexcept { return g_counters; }

void reset_op_counters() noexcept { g_counters = OpCounters{}; }

void set_finite_checks(bool enabled) noexcept { g_finite_checks = enabled; }

bool finite_checks_enabled() noexcept { return g_finite_checks; }

void check_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << "non-finite value " << values[i] << " at index " << i << " in "
          << what;
      throw NumericError(msg.str());
    }
  }
}

namespace detail {

std::span<double> grad_buffer(Tensor::Impl& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor new_result(Shape shape) {
  auto impl = std::make_shared<Tensor::Impl>();
  impl->data.assign(shape_numel(shape), 0.0);
  impl->shape = std::move(shape);
  return make_tensor(std::move(impl));
}

void finish(const Tensor& out, std::string_view op) {
  if (finite_checks_enabled()) check_finite(out.data(), op);
}

}  // namespace detail
}  // namespace lazyformer
