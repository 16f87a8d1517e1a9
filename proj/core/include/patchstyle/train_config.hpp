#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchstyle/archive.hpp"
#include "patchstyle/net_config.hpp"

namespace patchstyle {

enum class TrainMode { patch, fullframe };

/// Regularization baselines for the ablation harness. Never enabled by default.
enum class Augmentation { none, gaussian_noise, pixel_erase, occlusion, dropout_map, dropout_pixel };

std::string to_string(TrainMode mode);
std::string to_string(Augmentation augmentation);
TrainMode parse_train_mode(const std::string& text);
Augmentation parse_augmentation(const std::string& text);

struct LossWeights {
    double l1 = 1.0;
    double adversarial = 0.05;
    double perceptual = 0.01;

    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Step budgets are exact and used by tests; wall-clock budgets are for interactive use.
struct Budget {
    std::optional<int64_t> steps;
    std::optional<double> seconds;

    static Budget of_steps(int64_t n) { return {n, std::nullopt}; }
    static Budget of_seconds(double s) { return {std::nullopt, s}; }
    static Budget unbounded() { return {}; }
    bool bounded() const noexcept { return steps.has_value() || seconds.has_value(); }

    friend bool operator==(const Budget&, const Budget&) = default;
};

struct PerceptualConfig {
    enum class Mode { random, pretrained };
    Mode mode = Mode::random;
    uint64_t seed = 7;
    std::filesystem::path weights;  // pretrained mode only

    friend bool operator==(const PerceptualConfig&, const PerceptualConfig&) = default;
};

struct TrainConfig {
    int patch_size = 36;           // W_p
    int batch_size = 40;           // N_b
    double learning_rate = 0.0004;  // alpha
    int resnet_blocks = 7;         // N_r
    int base_filters = 32;
    int discriminator_filters = 32;
    LossWeights loss_weights;
    Budget budget = Budget::of_seconds(30.0);
    uint64_t seed = 1;
    bool use_guidance = false;
    TrainMode mode = TrainMode::patch;
    Augmentation augmentation = Augmentation::none;
    double augmentation_strength = 0.1;
    double checkpoint_interval_seconds = 2.0;
    int64_t checkpoint_interval_steps = 0;  // when > 0, overrides the wall-clock cadence
    bool allow_out_of_range = false;
    PerceptualConfig perceptual;

    /// Throws Error(config) on invalid values. Hyper-parameters outside the searched
    /// intervals require `allow_out_of_range`.
    void validate() const;
    NetConfig net_config() const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    std::string hash() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct HyperParameterRange {
    static constexpr int patch_min = 12, patch_max = 188;
    static constexpr int batch_min = 5, batch_max = 1000;
    static constexpr int blocks_min = 1, blocks_max = 40;
    static constexpr double lr_min = 0.0002, lr_max = 0.0032;
};

struct LossBreakdown {
    double l1 = 0.0;
    double adversarial_g = 0.0;
    double adversarial_d = 0.0;
    double perceptual = 0.0;
    double total = 0.0;

    nlohmann::json to_json() const;
    static LossBreakdown from_json(const nlohmann::json& j);
};

struct LossRecord {
    int64_t step = 0;
    double elapsed_seconds = 0.0;
    LossBreakdown loss;
    bool target_changed = false;  // keyframes were replaced just before this step
};

/// Immutable training snapshot handed to inference and persistence.
struct Checkpoint {
    NetConfig net;
    nlohmann::json train_config;
    std::string config_hash;
    int64_t step = 0;
    double elapsed_seconds = 0.0;
    int64_t target_version = 0;
    std::vector<TensorBlob> generator;
    std::vector<TensorBlob> discriminator;
    std::vector<LossRecord> history;
};

Archive to_archive(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_archive(const Archive& archive);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// CSV with header: step,elapsed_seconds,l1,adv_g,adv_d,perceptual,total
std::string loss_history_csv(const std::vector<LossRecord>& history);
void write_loss_history_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

TrainConfig read_train_config(const std::filesystem::path& path);

}  // namespace patchstyle
