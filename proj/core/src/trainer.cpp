#include "lazyformer/trainer.hpp"

#include <chrono>
#include <cmath>

#include "lazyformer/checkpoint.hpp"
#include "lazyformer/error.hpp"

namespace lazyformer {

namespace {

void require_finite_grads(const Model& model) {
  for (const auto& [name, tensor] : model.parameters()) {
    if (!tensor.has_grad()) continue;
    for (double g : tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + name);
    }
  }
}

// Name of the first parameter holding a NaN or infinity, if any.
std::string first_nonfinite_parameter(const Model& model) {
  for (const auto& [name, tensor] : model.parameters()) {
    for (double v : tensor.data()) {
      if (!std::isfinite(v)) return name;
    }
  }
  return {};
}

[[noreturn]] void report_nonfinite_loss(const Model& model, double loss) {
  const auto name = first_nonfinite_parameter(model);
  throw NumericError("loss is " + std::to_string(loss) +
                     "; first non-finite tensor: " + (name.empty() ? "logits" : name));
}

}  // namespace

MlmBatch make_batch(const std::vector<std::vector<std::int64_t>>& windows,
                    std::span<const std::size_t> indices, const MaskingPolicy& policy,
                    RandomState& rng) {
  MlmBatch batch;
  for (auto i : indices) batch.sequences.push_back(apply_masking(windows.at(i), policy, rng));
  return batch;
}

StepResult train_step(Model& model, const MlmBatch& batch, AdamW& optimizer,
                      const LrSchedule& schedule, RandomState& rng) {
  model.zero_grad();
  StepResult result;
  for (const auto& seq : batch.sequences) {
    for (auto label : seq.labels) result.predicted_tokens += label != ops::kIgnoreLabel;
  }

  if (result.predicted_tokens > 0) {
    Tape tape;
    Tensor total;
    {
      Tape::Recording recording(tape);
      try {
        for (const auto& seq : batch.sequences) {
          const auto out = forward(model, seq.inputs, Mode::kTrain, rng, {});
          const Tensor ce = ops::cross_entropy_sum(out.logits, seq.labels);
          total = total.defined() ? ops::add(total, ce) : ce;
        }
        total = ops::scale(total, 1.0 / static_cast<double>(result.predicted_tokens));
      } catch (const NumericError& e) {
        std::string message = "train step " + std::to_string(optimizer.step_count() + 1) + ": " +
                              e.what();
        if (const auto name = first_nonfinite_parameter(model); !name.empty()) {
          message += "; first non-finite tensor: " + name;
        }
        throw NumericError(message);
      }
    }
    result.loss = total.item();
    if (!std::isfinite(result.loss)) report_nonfinite_loss(model, result.loss);
    tape.backward(total);
    require_finite_grads(model);
  }

  result.lr = lr_at(optimizer.step_count() + 1, schedule);
  result.grad_norm = optimizer.step(result.lr).grad_norm;
  return result;
}

double evaluate_loss(const Model& model, const MlmBatch& batch) {
  RandomState unused(0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : batch.sequences) {
    const auto out = forward(model, seq.inputs, Mode::kEval, unused, {});
    total += ops::cross_entropy_sum(out.logits, seq.labels).item();
    for (auto label : seq.labels) count += label != ops::kIgnoreLabel;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::vector<TrainLogRow> train(Model& model, const std::vector<std::vector<std::int64_t>>& windows,
                               const TrainOptions& options,
                               const std::function<void(const TrainLogRow&)>& on_step) {
  if (windows.empty()) throw ConfigError("training corpus produced no windows");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  options.schedule.validate();
  MaskingPolicy masking = options.masking;
  if (masking.vocab_size == 0) masking.vocab_size = model.config.vocab_size;
  masking.validate();

  AdamW optimizer(model.parameters(), options.adam);
  const RandomState root(options.seed);
  std::vector<TrainLogRow> log;
  log.reserve(options.steps);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t step = 1; step <= options.steps; ++step) {
    RandomState rng = root.derive(step);
    std::vector<std::size_t> indices(options.batch_size);
    for (auto& i : indices) {
      i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(windows.size()) - 1));
    }
    const MlmBatch batch = make_batch(windows, indices, masking, rng);
    const StepResult r = train_step(model, batch, optimizer, options.schedule, rng);
    TrainLogRow row{step, r.loss, r.lr,
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                        .count()};
    log.push_back(row);
    if (on_step) on_step(row);
    if (!options.checkpoint_path.empty() && options.checkpoint_every > 0 &&
        step % options.checkpoint_every == 0) {
      save_checkpoint_file(model, options.checkpoint_path);
    }
  }
  if (!options.checkpoint_path.empty()) save_checkpoint_file(model, options.checkpoint_path);
  return log;
}

}  // namespace lazyformer
