#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "patchstyle/archive.hpp"
#include "patchstyle/image.hpp"
#include "patchstyle/net_config.hpp"

namespace patchstyle {

enum class DropoutKind { none, feature_map, pixel };

/// Residual block: x + conv(relu(conv(x))).
class ResidualBlockImpl : public torch::nn::Module {
public:
    explicit ResidualBlockImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x, const std::function<torch::Tensor(const torch::Tensor&)>& drop);

    torch::nn::Conv2d conv_a{nullptr};
    torch::nn::Conv2d conv_b{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// U-net style encoder / residual bottleneck / decoder. Fully convolutional with
/// reflection padding; the output passes through a sigmoid so it stays in [0,1].
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(const NetConfig& config);

    /// NCHW in, N x 3 x H x W out. H and W must be multiples of the downsample factor.
    torch::Tensor forward(const torch::Tensor& x);

    const NetConfig& config() const noexcept { return config_; }

    /// Training-time dropout applied to the input of every convolution after the stem.
    void set_dropout(DropoutKind kind, double rate, uint64_t seed);

private:
    torch::Tensor drop(const torch::Tensor& x);

    NetConfig config_;
    torch::nn::Conv2d stem_{nullptr};
    std::vector<torch::nn::Conv2d> down_;
    std::vector<ResidualBlock> blocks_;
    std::vector<torch::nn::Conv2d> up_;
    torch::nn::Conv2d head_{nullptr};

    DropoutKind dropout_ = DropoutKind::none;
    double dropout_rate_ = 0.0;
    std::optional<at::Generator> dropout_rng_;
};
TORCH_MODULE(Generator);

/// Conditional patch discriminator: three stride-2 stages and a 1-channel score map.
class DiscriminatorImpl : public torch::nn::Module {
public:
    DiscriminatorImpl(int input_channels, int base_filters);
    torch::Tensor forward(const torch::Tensor& x);

private:
    std::vector<torch::nn::Conv2d> stages_;
    torch::nn::Conv2d score_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Deterministic construction: weights come from a seeded std::mt19937_64, not torch's global RNG.
Generator build_generator(const NetConfig& config, uint64_t seed);
Discriminator build_discriminator(int input_channels, int base_filters, uint64_t seed);

int64_t parameter_count(const torch::nn::Module& module);

std::vector<TensorBlob> export_parameters(const torch::nn::Module& module);
/// Strict import: every parameter must be present with a matching shape.
void import_parameters(torch::nn::Module& module, const std::vector<TensorBlob>& blobs);

/// Moves 4-D parameters to NHWC layout; CPU convolutions on small maps run faster that way.
void to_channels_last(torch::nn::Module& module);
torch::Tensor channels_last(const torch::Tensor& tensor);

torch::Tensor image_to_tensor(const Image& image);  // 1 x C x H x W float
Image tensor_to_image(const torch::Tensor& tensor);  // expects 1 x C x H x W

/// Inference on one image. Dimensions must already be divisible; see `infer_padded`.
Image forward(Generator& generator, const Image& input);

/// Reflection-pads to the downsample grid, runs the generator, and crops back.
Image infer_padded(Generator& generator, const Image& input);

}  // namespace patchstyle
