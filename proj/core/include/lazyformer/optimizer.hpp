#pragma once

#include <cstddef>
#include <vector>

#include "lazyformer/model.hpp"

namespace lazyformer {

/// Linear warmup from 0 to `peak_lr`, then linear decay to 0 at `max_steps`.
struct LrSchedule {
  double peak_lr = 1e-4;
  std::size_t warmup_steps = 10'000;
  std::size_t max_steps = 1'000'000;

  /// Warmup length as a fraction of max_steps (rounded, at least 1 step).
  static LrSchedule from_warmup_ratio(double peak_lr, double ratio, std::size_t max_steps);

  /// Throws ConfigError unless 0 < warmup_steps < max_steps and peak_lr > 0.
  void validate() const;
};

/// Learning rate at `step`; 0 at and beyond max_steps.
double lr_at(std::size_t step, const LrSchedule& schedule);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // 0 disables clipping
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
};

/// Adam with bias correction, decoupled weight decay and global gradient
/// norm clipping. Weight decay applies to matrices only (rank >= 2), never
/// to biases or norm parameters.
class AdamW {
 public:
  explicit AdamW(std::vector<NamedTensor> params, AdamConfig config = {});

  struct StepInfo {
    double grad_norm = 0.0;  // before clipping
    double clip_scale = 1.0;
  };

  /// One update with learning rate `lr` from the parameters' current grads.
  StepInfo step(double lr);

  std::size_t step_count() const noexcept { return state_.step; }
  const OptimizerState& state() const noexcept { return state_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<NamedTensor>& params() const noexcept { return params_; }

  static bool decays(const NamedTensor& param) { return param.tensor.rank() >= 2; }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig config_;
  OptimizerState state_;
};

}  // namespace lazyformer
