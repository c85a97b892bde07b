#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "lazyformer/masking.hpp"
#include "lazyformer/model.hpp"
#include "lazyformer/optimizer.hpp"

namespace lazyformer {

struct MlmBatch {
  std::vector<MaskedSequence> sequences;
};

/// Windows `indices` of `windows`, each corrupted with `policy`.
MlmBatch make_batch(const std::vector<std::vector<std::int64_t>>& windows,
                    std::span<const std::size_t> indices, const MaskingPolicy& policy,
                    RandomState& rng);

struct StepResult {
  double loss = 0.0;  // mean cross-entropy over labelled positions
  double lr = 0.0;
  double grad_norm = 0.0;
  std::size_t predicted_tokens = 0;
};

/// Forward + backward over the batch in training mode, then one AdamW update
/// at lr_at(t) for the t-th update (1-based). A batch without labels yields
/// loss 0 and zero gradients. Throws NumericError naming the offending tensor
/// if the loss or a gradient is not finite.
StepResult train_step(Model& model, const MlmBatch& batch, AdamW& optimizer,
                      const LrSchedule& schedule, RandomState& rng);

/// Mean eval-mode cross-entropy over the labelled positions of `batch`.
double evaluate_loss(const Model& model, const MlmBatch& batch);

struct TrainOptions {
  std::uint64_t seed = 1;
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  LrSchedule schedule{1e-3, 10, 1000};
  AdamConfig adam;
  MaskingPolicy masking;  // vocab_size filled from the model when 0
  std::size_t checkpoint_every = 0;  // 0: only at the end, if a path is set
  std::filesystem::path checkpoint_path;
};

struct TrainLogRow {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

/// Runs `options.steps` updates. Batch t is drawn from a stream derived from
/// (seed, t), so the loss sequence depends only on the seed, data and model.
std::vector<TrainLogRow> train(Model& model, const std::vector<std::vector<std::int64_t>>& windows,
                               const TrainOptions& options,
                               const std::function<void(const TrainLogRow&)>& on_step = {});

}  // namespace lazyformer
