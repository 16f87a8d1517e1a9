#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "patchstyle/image.hpp"
#include "patchstyle/network.hpp"
#include "patchstyle/train_config.hpp"

namespace patchstyle {

/// Fixed convolutional feature extractor for the perceptual term. Either a
/// VGG-style stack loaded from an archive (tensors `convB_I.weight` / `.bias`,
/// blocks separated by 2x2 max pooling, ImageNet input normalization), or a seeded
/// random-weight stack for hermetic runs. Parameters never receive gradients.
class FeatureExtractor {
public:
    static FeatureExtractor random(uint64_t seed);
    static FeatureExtractor pretrained(const std::filesystem::path& weights);
    static FeatureExtractor from_config(const PerceptualConfig& config);

    /// N x 3 x H x W in [0,1] -> one feature map per tap.
    std::vector<torch::Tensor> features(const torch::Tensor& images) const;
    std::vector<torch::Tensor> features(const Image& image) const;

    int min_extent() const noexcept { return min_extent_; }
    void to(torch::Dtype dtype);

private:
    struct Layer {
        torch::Tensor weight;
        torch::Tensor bias;
        bool pool_before = false;
        bool tap = false;
    };

    std::vector<Layer> layers_;
    bool normalize_ = false;
    bool max_pool_ = false;
    int min_extent_ = 4;
};

/// Mean squared distance between feature stacks, averaged over taps.
double feature_distance(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b);

struct LossTerms {
    torch::Tensor generator_total;  // differentiable, for the generator update
    torch::Tensor discriminator;    // differentiable w.r.t. the discriminator only (empty when unused)
    LossBreakdown values;
};

/// `inputs` are the generator inputs (conditioning for the discriminator),
/// `loss_masks` is N x 1 x H x W with 0/1 entries.
///
/// l1 is the mean absolute error over masked pixels and channels. The perceptual
/// term averages per-patch feature distances over patches with at least one mask
/// bit. The adversarial terms use a least-squares objective on (input, output)
/// pairs; they are skipped when `discriminator` is null or its weight is zero.
LossTerms compute_loss(const torch::Tensor& inputs, const torch::Tensor& predicted, const torch::Tensor& target,
                       const torch::Tensor& loss_masks, const LossWeights& weights,
                       const FeatureExtractor* features, Discriminator* discriminator);

}  // namespace patchstyle
