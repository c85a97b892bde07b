#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "lazyformer/random.hpp"
#include "lazyformer/tensor.hpp"

namespace lazyformer::testing {

// Central differences of f() with respect to every entry of `param`.
inline std::vector<double> numeric_grad(Tensor param, const std::function<double()>& f,
                                        double h = 1e-5) {
  auto values = param.data();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f();
    values[i] = saved - h;
    const double down = f();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

// max|a − b| over the larger of the two infinity norms.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff;
}

inline Tensor uniform(Shape shape, double lo, double hi, RandomState& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

inline Tensor tracked(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

// sum(out ⊙ weights): a loss whose gradient does not vanish by symmetry.
inline Tensor weighted_sum(const Tensor& out, const Tensor& weights) {
  return ops::sum(ops::mul(out, weights));
}

// Backprop gradient of `loss_of()` with respect to each tensor in `params`.
inline std::vector<std::vector<double>> analytic_grads(const std::vector<Tensor>& params,
                                                       const std::function<Tensor()>& loss_of) {
  for (auto p : params) p.zero_grad();
  Tape tape;
  Tensor loss;
  {
    Tape::Recording recording(tape);
    loss = loss_of();
  }
  tape.backward(loss);
  std::vector<std::vector<double>> out;
  for (auto p : params) out.emplace_back(p.grad().begin(), p.grad().end());
  return out;
}

}  // namespace lazyformer::testing
