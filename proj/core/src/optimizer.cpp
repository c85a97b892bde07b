#include "lazyformer/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "lazyformer/error.hpp"

namespace lazyformer {

LrSchedule LrSchedule::from_warmup_ratio(double peak_lr, double ratio, std::size_t max_steps) {
  const auto warmup = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(max_steps)));
  return LrSchedule{peak_lr, std::max<std::size_t>(warmup, 1), max_steps};
}

void LrSchedule::validate() const {
  if (!(peak_lr > 0.0)) throw ConfigError("peak learning rate must be positive");
  if (warmup_steps == 0 || warmup_steps >= max_steps) {
    throw ConfigError("schedule needs 0 < warmup_steps < max_steps");
  }
}

double lr_at(std::size_t step, const LrSchedule& s) {
  if (step >= s.max_steps) return 0.0;
  if (step <= s.warmup_steps) {
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  return s.peak_lr * static_cast<double>(s.max_steps - step) /
         static_cast<double>(s.max_steps - s.warmup_steps);
}

AdamW::AdamW(std::vector<NamedTensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    state_.first_moment.emplace_back(p.tensor.numel(), 0.0);
    state_.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
}

AdamW::StepInfo AdamW::step(double lr) {
  StepInfo info;
  double squared = 0.0;
  for (auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) squared += g * g;
  }
  info.grad_norm = std::sqrt(squared);
  if (config_.clip_norm > 0.0 && info.grad_norm > config_.clip_norm) {
    info.clip_scale = config_.clip_norm / info.grad_norm;
  }

  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto values = p.tensor.data();
    auto grads = p.tensor.grad();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    const double decay = decays(p) ? lr * config_.weight_decay : 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[j] * info.clip_scale;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      values[j] -= decay * values[j];
      values[j] -= lr * (m[j] / correction1) / (std::sqrt(v[j] / correction2) + config_.eps);
    }
  }
  return info;
}

}  // namespace lazyformer
