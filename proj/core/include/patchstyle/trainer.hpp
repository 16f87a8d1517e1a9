#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "patchstyle/dataset.hpp"
#include "patchstyle/losses.hpp"
#include "patchstyle/network.hpp"
#include "patchstyle/train_config.hpp"

namespace patchstyle {

struct TrainCallbacks {
    std::function<void(const Checkpoint&)> on_checkpoint;
    std::function<void(const LossRecord&)> on_step;
    /// Polled between steps; returning true ends training early.
    std::function<bool()> should_stop;
};

/// Owns one generator/discriminator pair and its optimizers. Not thread-safe:
/// one thread drives `step`/`run`; snapshots are immutable values that other
/// threads may consume.
class Trainer {
public:
    Trainer(std::vector<Keyframe> keyframes, TrainConfig config);

    /// One optimization step: sample a batch, forward, loss, backpropagate, update.
    LossRecord step();

    /// Swaps training targets and continues from the current weights. The next
    /// loss record carries the target-change marker.
    void replace_keyframes(std::vector<Keyframe> keyframes);

    /// Runs until the budget is exhausted (or `should_stop`), emitting checkpoints at the
    /// configured cadence. Always emits the initial and the final checkpoint.
    Checkpoint run(const TrainCallbacks& callbacks = {});

    Checkpoint snapshot() const;

    int64_t steps_done() const noexcept { return step_; }
    double elapsed_seconds() const noexcept { return elapsed_; }
    int64_t target_version() const noexcept { return target_version_; }
    const std::vector<LossRecord>& history() const noexcept { return history_; }
    const TrainConfig& config() const noexcept { return config_; }
    Generator& generator() noexcept { return generator_; }
    const FeatureExtractor& feature_extractor() const noexcept { return features_; }

private:
    void rebuild_data();
    void augment(PatchBatch& batch);

    TrainConfig config_;
    std::vector<Keyframe> keyframes_;
    std::optional<PatchSampler> sampler_;
    std::optional<PatchBatch> full_batch_;
    Generator generator_{nullptr};
    Discriminator discriminator_{nullptr};
    std::unique_ptr<torch::optim::Adam> gen_opt_;
    std::unique_ptr<torch::optim::Adam> disc_opt_;
    FeatureExtractor features_;
    std::mt19937_64 rng_;
    int64_t step_ = 0;
    double elapsed_ = 0.0;
    int64_t target_version_ = 0;
    bool target_changed_ = false;
    std::vector<LossRecord> history_;
};

/// Trains from scratch under `config.budget` and returns the final checkpoint.
Checkpoint train(std::vector<Keyframe> keyframes, const TrainConfig& config, const TrainCallbacks& callbacks = {});

/// Reconstructs the generator stored in a checkpoint (eval mode, no gradients).
Generator load_generator(const Checkpoint& checkpoint);

struct EvalPair {
    Image input;      // RGB, plus guidance channels when the model uses them
    Image reference;  // RGB
    std::optional<Mask> mask;
};

/// Full-frame inference on each pair scored with the training loss, averaged.
LossBreakdown evaluate(const Checkpoint& checkpoint, std::span<const EvalPair> pairs, const LossWeights& weights,
                       const FeatureExtractor& features);
LossBreakdown evaluate(const Checkpoint& checkpoint, std::span<const EvalPair> pairs);

/// Element-wise batch tensors (NCHW) for a patch batch.
struct BatchTensors {
    torch::Tensor inputs;
    torch::Tensor targets;
    torch::Tensor masks;  // N x 1 x H x W
};
BatchTensors to_tensors(const PatchBatch& batch, torch::Dtype dtype = torch::kFloat32);

}  // namespace patchstyle
