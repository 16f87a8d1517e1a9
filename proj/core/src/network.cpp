#include "patchstyle/network.hpp"

#include <cmath>
#include <random>

#include "patchstyle/error.hpp"

namespace patchstyle {

namespace nn = torch::nn;

// ---------------------------------------------------------------------------

namespace {

nn::Conv2d conv3x3(int in, int out, int stride = 1, bool reflect = true) {
    auto opts = nn::Conv2dOptions(in, out, 3).stride(stride).padding(1);
    if (reflect) opts.padding_mode(torch::kReflect);
    return nn::Conv2d(opts);
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int channels) {
    conv_a = register_module("conv_a", conv3x3(channels, channels));
    conv_b = register_module("conv_b", conv3x3(channels, channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x,
                                         const std::function<torch::Tensor(const torch::Tensor&)>& drop) {
    auto h = torch::relu(conv_a(drop(x)));
    return x + conv_b(drop(h));
}

GeneratorImpl::GeneratorImpl(const NetConfig& config) : config_(config) {
    config_.validate();
    const int f = config_.base_filters;
    stem_ = register_module("stem", conv3x3(config_.input_channels, f));
    for (int s = 1; s <= config_.downsample_steps; ++s)
        down_.push_back(register_module("down" + std::to_string(s), conv3x3(f << (s - 1), f << s, 2)));
    const int bottleneck = f << config_.downsample_steps;
    for (int b = 0; b < config_.resnet_blocks; ++b)
        blocks_.push_back(register_module("block" + std::to_string(b), ResidualBlock(bottleneck)));
    for (int s = config_.downsample_steps; s >= 1; --s)
        up_.push_back(register_module("up" + std::to_string(s), conv3x3((f << s) + (f << (s - 1)), f << (s - 1))));
    head_ = register_module("head", conv3x3(f, config_.output_channels));
}

void GeneratorImpl::set_dropout(DropoutKind kind, double rate, uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw Error(ErrorCode::config, "dropout rate must be in [0,1)");
    dropout_ = kind;
    dropout_rate_ = rate;
    dropout_rng_ = at::detail::createCPUGenerator(seed);
}

torch::Tensor GeneratorImpl::drop(const torch::Tensor& x) {
    if (!is_training() || dropout_ == DropoutKind::none || dropout_rate_ <= 0.0) return x;
    const double keep = 1.0 - dropout_rate_;
    auto shape = x.sizes().vec();
    if (dropout_ == DropoutKind::feature_map) {
        shape[2] = 1;
        shape[3] = 1;
    }
    auto probs = torch::full(shape, keep, x.options());
    auto mask = torch::bernoulli(probs, *dropout_rng_);
    return x * mask / keep;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4) throw Error(ErrorCode::invalid_argument, "generator expects an NCHW tensor");
    if (x.size(1) != config_.input_channels)
        throw Error(ErrorCode::channel_mismatch, "generator expects " + std::to_string(config_.input_channels) +
                                                     " input channels, got " + std::to_string(x.size(1)));
    const int factor = config_.downsample_factor();
    if (x.size(2) % factor != 0 || x.size(3) % factor != 0)
        throw Error(ErrorCode::dimension_mismatch, "input extent must be a multiple of " + std::to_string(factor));

    auto dropper = [this](const torch::Tensor& t) { return drop(t); };
    std::vector<torch::Tensor> skips;
    auto h = torch::relu(stem_(x));
    skips.push_back(h);
    for (auto& d : down_) {
        h = torch::relu(d(drop(h)));
        skips.push_back(h);
    }
    for (auto& b : blocks_) h = b->forward(h, dropper);
    for (size_t i = 0; i < up_.size(); ++i) {
        h = torch::upsample_nearest2d(h, std::vector<int64_t>{h.size(2) * 2, h.size(3) * 2});
        h = torch::cat({h, skips[skips.size() - 2 - i]}, 1);
        h = torch::relu(up_[i](drop(h)));
    }
    return torch::sigmoid(head_(drop(h)));
}

DiscriminatorImpl::DiscriminatorImpl(int input_channels, int base_filters) {
    int in = input_channels;
    for (int s = 0; s < 3; ++s) {
        const int out = base_filters << s;
        stages_.push_back(register_module("stage" + std::to_string(s), conv3x3(in, out, 2, false)));
        in = out;
    }
    score_ = register_module("score", conv3x3(in, 1, 1, false));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
    auto h = x;
    for (auto& s : stages_) h = torch::leaky_relu(s(h), 0.2);
    return score_(h);
}

// ---------------------------------------------------------------------------

namespace {

// He-uniform weights, zero biases. Residual output convolutions start small so the
// bottleneck begins close to identity.
void initialize(torch::nn::Module& module, uint64_t seed) {
    std::mt19937_64 rng(seed);
    torch::NoGradGuard guard;
    for (auto& item : module.named_parameters(true)) {
        auto& p = item.value();
        const auto& name = item.key();
        auto cpu = torch::empty(p.sizes(), torch::kFloat32);
        auto* data = cpu.data_ptr<float>();
        const int64_t n = cpu.numel();
        if (name.ends_with(".bias") || p.dim() < 2) {
            std::fill(data, data + n, 0.0f);
        } else {
            const int64_t fan_in = p.numel() / p.size(0);
            float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
            if (name.find("conv_b") != std::string::npos) bound *= 0.1f;
            if (name.starts_with("head")) bound = std::sqrt(3.0f / static_cast<float>(fan_in));
            std::uniform_real_distribution<float> dist(-bound, bound);
            for (int64_t i = 0; i < n; ++i) data[i] = dist(rng);
        }
        p.copy_(cpu);
    }
}

}  // namespace

Generator build_generator(const NetConfig& config, uint64_t seed) {
    Generator g(config);
    initialize(*g, seed);
    return g;
}

Discriminator build_discriminator(int input_channels, int base_filters, uint64_t seed) {
    Discriminator d(input_channels, base_filters);
    initialize(*d, seed);
    return d;
}

int64_t parameter_count(const torch::nn::Module& module) {
    int64_t n = 0;
    for (const auto& p : module.parameters(true)) n += p.numel();
    return n;
}

std::vector<TensorBlob> export_parameters(const torch::nn::Module& module) {
    std::vector<TensorBlob> out;
    for (const auto& item : module.named_parameters(true)) {
        auto t = item.value().detach().to(torch::kCPU, torch::kFloat32).contiguous();
        TensorBlob blob;
        blob.name = item.key();
        blob.shape = t.sizes().vec();
        blob.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
        out.push_back(std::move(blob));
    }
    return out;
}

void import_parameters(torch::nn::Module& module, const std::vector<TensorBlob>& blobs) {
    torch::NoGradGuard guard;
    auto params = module.named_parameters(true);
    if (params.size() != blobs.size())
        throw Error(ErrorCode::invalid_argument, "parameter count mismatch: module has " +
                                                     std::to_string(params.size()) + ", archive has " +
                                                     std::to_string(blobs.size()));
    for (const auto& blob : blobs) {
        auto* p = params.find(blob.name);
        if (p == nullptr) throw Error(ErrorCode::invalid_argument, "unknown parameter '" + blob.name + "'");
        if (p->sizes().vec() != blob.shape)
            throw Error(ErrorCode::invalid_argument, "shape mismatch for parameter '" + blob.name + "'");
        auto src = torch::from_blob(const_cast<float*>(blob.values.data()), blob.shape, torch::kFloat32);
        p->copy_(src);
    }
}

torch::Tensor image_to_tensor(const Image& image) {
    auto t = torch::empty({1, image.channels, image.height, image.width}, torch::kFloat32);
    auto* dst = t.data_ptr<float>();
    const size_t plane = image.pixel_count();
    for (size_t p = 0; p < plane; ++p)
        for (int c = 0; c < image.channels; ++c) dst[c * plane + p] = image.data[p * image.channels + c];
    return t;
}

void to_channels_last(torch::nn::Module& module) {
    torch::NoGradGuard guard;
    for (auto& p : module.parameters())
        if (p.dim() == 4) p.set_data(p.data().contiguous(torch::MemoryFormat::ChannelsLast));
}

torch::Tensor channels_last(const torch::Tensor& tensor) {
    return tensor.contiguous(torch::MemoryFormat::ChannelsLast);
}

Image tensor_to_image(const torch::Tensor& tensor) {
    if (tensor.dim() != 4 || tensor.size(0) != 1)
        throw Error(ErrorCode::invalid_argument, "expected a 1 x C x H x W tensor");
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    Image image(static_cast<int>(t.size(3)), static_cast<int>(t.size(2)), static_cast<int>(t.size(1)));
    const auto* src = t.data_ptr<float>();
    const size_t plane = image.pixel_count();
    for (size_t p = 0; p < plane; ++p)
        for (int c = 0; c < image.channels; ++c) image.data[p * image.channels + c] = src[c * plane + p];
    return image;
}

Image forward(Generator& generator, const Image& input) {
    torch::NoGradGuard guard;
    auto param = generator->parameters().front();
    auto x = image_to_tensor(input).to(param.device(), param.scalar_type());
    return tensor_to_image(generator->forward(x));
}

Image infer_padded(Generator& generator, const Image& input) {
    const int factor = generator->config().downsample_factor();
    if (input.width % factor == 0 && input.height % factor == 0) return forward(generator, input);
    Image out = forward(generator, pad_to_multiple(input, factor));
    return crop(out, 0, 0, input.width, input.height);
}

}  // namespace patchstyle
