#pragma once

// Helpers shared by op implementations.

#include <initializer_list>
#include <span>
#include <string_view>

#include "lazyformer/tensor.hpp"

namespace lazyformer {

Tensor make_tensor(std::shared_ptr<Tensor::Impl> impl);

namespace detail {

std::span<double> grad_buffer(Tensor::Impl& impl);

inline std::span<double> grad_of(const Tensor& t) { return grad_buffer(*t.impl()); }

/// True when a tape is recording and at least one input is tracked.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Zero-filled untracked tensor.
Tensor new_result(Shape shape);

/// Post-op checks on a freshly computed output.
void finish(const Tensor& out, std::string_view op);

}  // namespace detail
}  // namespace lazyformer
