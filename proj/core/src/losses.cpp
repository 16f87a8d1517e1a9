#include "patchstyle/losses.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <regex>

#include "patchstyle/archive.hpp"
#include "patchstyle/error.hpp"

namespace patchstyle {

FeatureExtractor FeatureExtractor::random(uint64_t seed) {
    FeatureExtractor fx;
    std::mt19937_64 rng(seed);
    struct Spec {
        int in, out;
        bool pool, tap;
    };
    const Spec specs[] = {{3, 16, false, false}, {16, 16, false, true}, {16, 32, true, false}, {32, 32, false, true}};
    for (const auto& s : specs) {
        std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / (9.0f * s.in)));
        auto w = torch::empty({s.out, s.in, 3, 3}, torch::kFloat32);
        auto* data = w.data_ptr<float>();
        for (int64_t i = 0; i < w.numel(); ++i) data[i] = dist(rng);
        fx.layers_.push_back({w, torch::zeros({s.out}, torch::kFloat32), s.pool, s.tap});
    }
    fx.min_extent_ = 4;
    return fx;
}

FeatureExtractor FeatureExtractor::pretrained(const std::filesystem::path& weights) {
    if (!std::filesystem::exists(weights))
        throw Error(ErrorCode::io, "perceptual weights file '" + weights.string() + "' not found");
    const Archive archive = read_archive(weights);

    // Order layers by (block, index) from names like "conv2_1.weight".
    const std::regex pattern(R"(conv(\d+)_(\d+)\.weight)");
    std::map<std::pair<int, int>, const TensorBlob*> convs;
    for (const auto& t : archive.tensors) {
        std::smatch m;
        if (std::regex_match(t.name, m, pattern)) convs[{std::stoi(m[1]), std::stoi(m[2])}] = &t;
    }
    if (convs.empty()) throw Error(ErrorCode::io, "no convN_M.weight tensors in '" + weights.string() + "'");

    FeatureExtractor fx;
    fx.normalize_ = true;
    fx.max_pool_ = true;
    int prev_block = convs.begin()->first.first;
    int blocks = 1;
    for (auto it = convs.begin(); it != convs.end(); ++it) {
        const auto [block, index] = it->first;
        const TensorBlob& w = *it->second;
        if (w.shape.size() != 4) throw Error(ErrorCode::io, "perceptual weight '" + w.name + "' is not 4-D");
        const std::string bias_name = "conv" + std::to_string(block) + "_" + std::to_string(index) + ".bias";
        const TensorBlob* b = archive.find(bias_name);
        Layer layer;
        layer.weight = torch::from_blob(const_cast<float*>(w.values.data()), w.shape, torch::kFloat32).clone();
        layer.bias = b ? torch::from_blob(const_cast<float*>(b->values.data()), b->shape, torch::kFloat32).clone()
                       : torch::zeros({w.shape[0]}, torch::kFloat32);
        layer.pool_before = block != prev_block;
        if (layer.pool_before) ++blocks;
        auto next = std::next(it);
        layer.tap = next == convs.end() || next->first.first != block;
        prev_block = block;
        fx.layers_.push_back(std::move(layer));
    }
    if (fx.layers_.front().weight.size(1) != 3) throw Error(ErrorCode::io, "perceptual network must take RGB input");
    fx.min_extent_ = 1 << blocks;
    return fx;
}

FeatureExtractor FeatureExtractor::from_config(const PerceptualConfig& config) {
    return config.mode == PerceptualConfig::Mode::random ? random(config.seed) : pretrained(config.weights);
}

void FeatureExtractor::to(torch::Dtype dtype) {
    for (auto& l : layers_) {
        l.weight = l.weight.to(dtype);
        l.bias = l.bias.to(dtype);
    }
}

std::vector<torch::Tensor> FeatureExtractor::features(const torch::Tensor& images) const {
    if (images.dim() != 4 || images.size(1) != 3)
        throw Error(ErrorCode::channel_mismatch, "feature extractor expects N x 3 x H x W");
    if (images.size(2) < min_extent_ || images.size(3) < min_extent_)
        throw Error(ErrorCode::dimension_mismatch, "image smaller than the feature extractor minimum of " +
                                                       std::to_string(min_extent_));
    auto h = images;
    if (normalize_) {
        auto mean = torch::tensor({0.485, 0.456, 0.406}, images.options()).view({1, 3, 1, 1});
        auto stdev = torch::tensor({0.229, 0.224, 0.225}, images.options()).view({1, 3, 1, 1});
        h = (h - mean) / stdev;
    }
    std::vector<torch::Tensor> taps;
    for (const auto& l : layers_) {
        if (l.pool_before) h = max_pool_ ? torch::max_pool2d(h, 2) : torch::avg_pool2d(h, 2);
        h = torch::relu(torch::conv2d(h, l.weight.to(h.scalar_type()), l.bias.to(h.scalar_type()), 1, 1));
        if (l.tap) taps.push_back(h);
    }
    return taps;
}

std::vector<torch::Tensor> FeatureExtractor::features(const Image& image) const {
    torch::NoGradGuard guard;
    return features(image_to_tensor(image));
}

double feature_distance(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    if (a.size() != b.size() || a.empty()) throw Error(ErrorCode::invalid_argument, "feature stacks differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) sum += torch::mse_loss(a[i], b[i]).item<double>();
    return sum / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------

LossTerms compute_loss(const torch::Tensor& inputs, const torch::Tensor& predicted, const torch::Tensor& target,
                       const torch::Tensor& loss_masks, const LossWeights& weights,
                       const FeatureExtractor* features, Discriminator* discriminator) {
    if (predicted.sizes() != target.sizes())
        throw Error(ErrorCode::dimension_mismatch, "predicted and target shapes differ");
    if (predicted.dim() != 4 || loss_masks.dim() != 4 || loss_masks.size(0) != predicted.size(0) ||
        loss_masks.size(1) != 1 || loss_masks.size(2) != predicted.size(2) || loss_masks.size(3) != predicted.size(3))
        throw Error(ErrorCode::dimension_mismatch, "loss mask shape does not match the predictions");
    if (inputs.size(0) != predicted.size(0) || inputs.size(2) != predicted.size(2) ||
        inputs.size(3) != predicted.size(3))
        throw Error(ErrorCode::dimension_mismatch, "inputs do not match the predictions");

    const auto mask = loss_masks.to(predicted.scalar_type());
    const double masked_pixels = mask.sum().item<double>();
    if (masked_pixels <= 0.0) throw Error(ErrorCode::invalid_argument, "all loss masks are empty");

    LossTerms terms;
    auto& v = terms.values;

    const auto l1 = ((predicted - target).abs() * mask).sum() / (masked_pixels * predicted.size(1));
    auto total = weights.l1 * l1;
    v.l1 = l1.item<double>();

    // Per-patch validity: any mask bit set.
    const auto valid = (mask.flatten(1).amax(1) > 0).to(predicted.scalar_type());
    const double valid_count = valid.sum().item<double>();

    if (features != nullptr && weights.perceptual > 0.0) {
        const auto fp = features->features(predicted);
        std::vector<torch::Tensor> ft;
        {
            torch::NoGradGuard guard;
            ft = features->features(target);
        }
        torch::Tensor per_patch = torch::zeros({predicted.size(0)}, predicted.options());
        for (size_t i = 0; i < fp.size(); ++i) per_patch = per_patch + (fp[i] - ft[i]).pow(2).flatten(1).mean(1);
        per_patch = per_patch / static_cast<double>(fp.size());
        const auto perceptual = (per_patch * valid).sum() / valid_count;
        total = total + weights.perceptual * perceptual;
        v.perceptual = perceptual.item<double>();
    }

    if (discriminator != nullptr && weights.adversarial > 0.0) {
        auto& d = *discriminator;
        auto weight_map = [&](const torch::Tensor& scores) { return valid.view({-1, 1, 1, 1}).expand_as(scores); };
        auto masked_mean = [&](const torch::Tensor& x, const torch::Tensor& w) { return (x * w).sum() / w.sum(); };

        const auto fake_scores = d->forward(torch::cat({inputs, predicted}, 1));
        const auto w = weight_map(fake_scores);
        const auto adv_g = masked_mean((fake_scores - 1.0).pow(2), w);
        total = total + weights.adversarial * adv_g;
        v.adversarial_g = adv_g.item<double>();

        const auto real_scores = d->forward(torch::cat({inputs, target}, 1));
        const auto fake_detached = d->forward(torch::cat({inputs, predicted.detach()}, 1));
        terms.discriminator =
            0.5 * (masked_mean((real_scores - 1.0).pow(2), w) + masked_mean(fake_detached.pow(2), w));
        v.adversarial_d = terms.discriminator.item<double>();
    }

    terms.generator_total = total;
    v.total = weights.l1 * v.l1 + weights.adversarial * v.adversarial_g + weights.perceptual * v.perceptual;
    return terms;
}

}  // namespace patchstyle
