#include "patchstyle/trainer.hpp"

#include <algorithm>

#include "patchstyle/error.hpp"

namespace patchstyle {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<Keyframe> conform_keyframes(std::vector<Keyframe> keyframes, bool use_guidance) {
    if (keyframes.empty()) throw Error(ErrorCode::empty_input, "training needs at least one keyframe");
    for (auto& kf : keyframes) {
        if (use_guidance && !kf.guidance)
            throw Error(ErrorCode::channel_mismatch,
                        "use_guidance is set but keyframe " + std::to_string(kf.index) + " has no guidance layer");
        if (!use_guidance) kf.guidance.reset();
    }
    return keyframes;
}

}  // namespace

BatchTensors to_tensors(const PatchBatch& b, torch::Dtype dtype) {
    auto make = [&](const std::vector<float>& v, int64_t c) {
        return torch::from_blob(const_cast<float*>(v.data()), {b.count, c, b.height, b.width}, torch::kFloat32)
            .to(dtype, /*non_blocking=*/false, /*copy=*/true);
    };
    return {make(b.inputs, b.input_channels), make(b.targets, 3), make(b.loss_masks, 1)};
}

Trainer::Trainer(std::vector<Keyframe> keyframes, TrainConfig config)
    : config_(std::move(config)), features_(FeatureExtractor::random(0)) {
    config_.validate();
    keyframes_ = conform_keyframes(std::move(keyframes), config_.use_guidance);
    const NetConfig net = config_.net_config();
    generator_ = build_generator(net, config_.seed);
    discriminator_ = build_discriminator(net.input_channels + 3, config_.discriminator_filters, config_.seed + 1);
    to_channels_last(*generator_);
    to_channels_last(*discriminator_);
    generator_->train();
    discriminator_->train();
    gen_opt_ = std::make_unique<torch::optim::Adam>(generator_->parameters(),
                                                    torch::optim::AdamOptions(config_.learning_rate));
    disc_opt_ = std::make_unique<torch::optim::Adam>(discriminator_->parameters(),
                                                     torch::optim::AdamOptions(config_.learning_rate));
    features_ = FeatureExtractor::from_config(config_.perceptual);
    rng_.seed(config_.seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull);
    if (config_.augmentation == Augmentation::dropout_map)
        generator_->set_dropout(DropoutKind::feature_map, config_.augmentation_strength, config_.seed + 2);
    if (config_.augmentation == Augmentation::dropout_pixel)
        generator_->set_dropout(DropoutKind::pixel, config_.augmentation_strength, config_.seed + 2);
    rebuild_data();
}

void Trainer::rebuild_data() {
    sampler_.reset();
    full_batch_.reset();
    if (config_.mode == TrainMode::patch)
        sampler_.emplace(keyframes_, config_.patch_size);
    else
        full_batch_ = full_frame_batch(keyframes_, config_.net_config().downsample_factor());
}

void Trainer::replace_keyframes(std::vector<Keyframe> keyframes) {
    auto conformed = conform_keyframes(std::move(keyframes), config_.use_guidance);
    std::swap(keyframes_, conformed);
    try {
        rebuild_data();
    } catch (...) {
        std::swap(keyframes_, conformed);
        rebuild_data();
        throw;
    }
    ++target_version_;
    target_changed_ = true;
}

void Trainer::augment(PatchBatch& batch) {
    const float strength = static_cast<float>(config_.augmentation_strength);
    const size_t plane = static_cast<size_t>(batch.width) * batch.height;
    const size_t stride = batch.input_channels * plane;
    switch (config_.augmentation) {
        case Augmentation::gaussian_noise: {
            std::normal_distribution<float> noise(0.0f, strength);
            for (int n = 0; n < batch.count; ++n)
                for (size_t i = 0; i < 3 * plane; ++i) batch.inputs[n * stride + i] += noise(rng_);
            break;
        }
        case Augmentation::pixel_erase: {
            std::bernoulli_distribution erase(strength);
            for (int n = 0; n < batch.count; ++n)
                for (size_t p = 0; p < plane; ++p)
                    if (erase(rng_))
                        for (int c = 0; c < 3; ++c) batch.inputs[n * stride + c * plane + p] = 0.0f;
            break;
        }
        case Augmentation::occlusion: {
            std::uniform_real_distribution<float> frac(0.1f, 0.3f);
            for (int n = 0; n < batch.count; ++n)
                for (int r = 0; r < 2; ++r) {
                    const int w = std::max(1, static_cast<int>(frac(rng_) * batch.width));
                    const int h = std::max(1, static_cast<int>(frac(rng_) * batch.height));
                    const int x0 = std::uniform_int_distribution<int>(0, batch.width - w)(rng_);
                    const int y0 = std::uniform_int_distribution<int>(0, batch.height - h)(rng_);
                    for (int y = y0; y < y0 + h; ++y)
                        for (int x = x0; x < x0 + w; ++x)
                            for (int c = 0; c < 3; ++c)
                                batch.inputs[n * stride + c * plane + static_cast<size_t>(y) * batch.width + x] = 0.0f;
                }
            break;
        }
        default:
            break;
    }
}

LossRecord Trainer::step() {
    const auto t0 = Clock::now();
    PatchBatch batch = config_.mode == TrainMode::patch ? sampler_->sample(config_.batch_size, rng_) : *full_batch_;
    augment(batch);
    const auto tensors = to_tensors(batch);
    const auto inputs = channels_last(tensors.inputs);

    const auto predicted = generator_->forward(inputs);
    const bool adversarial = config_.loss_weights.adversarial > 0.0;
    auto terms = compute_loss(inputs, predicted, channels_last(tensors.targets), tensors.masks, config_.loss_weights,
                              &features_, adversarial ? &discriminator_ : nullptr);

    gen_opt_->zero_grad();
    terms.generator_total.backward();
    gen_opt_->step();
    if (terms.discriminator.defined()) {
        disc_opt_->zero_grad();
        terms.discriminator.backward();
        disc_opt_->step();
    }

    ++step_;
    elapsed_ += seconds_since(t0);
    LossRecord record{step_, elapsed_, terms.values, target_changed_};
    target_changed_ = false;
    history_.push_back(record);
    return record;
}

Checkpoint Trainer::snapshot() const {
    Checkpoint c;
    c.net = config_.net_config();
    c.train_config = config_.to_json();
    c.config_hash = config_.hash();
    c.step = step_;
    c.elapsed_seconds = elapsed_;
    c.target_version = target_version_;
    c.generator = export_parameters(*generator_);
    c.discriminator = export_parameters(*discriminator_);
    c.history = history_;
    return c;
}

Checkpoint Trainer::run(const TrainCallbacks& callbacks) {
    const auto start = Clock::now();
    auto last_emit = start;
    int64_t run_steps = 0;
    int64_t last_emit_step = step_;

    auto emit = [&] {
        Checkpoint c = snapshot();
        if (callbacks.on_checkpoint) callbacks.on_checkpoint(c);
        last_emit = Clock::now();
        last_emit_step = step_;
        return c;
    };
    auto exhausted = [&] {
        if (callbacks.should_stop && callbacks.should_stop()) return true;
        if (config_.budget.steps) return run_steps >= *config_.budget.steps;
        if (config_.budget.seconds) return seconds_since(start) >= *config_.budget.seconds;
        return false;
    };

    Checkpoint latest = emit();
    while (!exhausted()) {
        const auto record = step();
        ++run_steps;
        if (callbacks.on_step) callbacks.on_step(record);
        const bool due = config_.checkpoint_interval_steps > 0
                             ? step_ - last_emit_step >= config_.checkpoint_interval_steps
                             : seconds_since(last_emit) >= config_.checkpoint_interval_seconds;
        if (due) latest = emit();
    }
    if (last_emit_step != step_) latest = emit();
    return latest;
}

Checkpoint train(std::vector<Keyframe> keyframes, const TrainConfig& config, const TrainCallbacks& callbacks) {
    Trainer trainer(std::move(keyframes), config);
    return trainer.run(callbacks);
}

Generator load_generator(const Checkpoint& checkpoint) {
    Generator g = build_generator(checkpoint.net, 0);
    import_parameters(*g, checkpoint.generator);
    g->eval();
    for (auto& p : g->parameters()) p.set_requires_grad(false);
    return g;
}

LossBreakdown evaluate(const Checkpoint& checkpoint, std::span<const EvalPair> pairs, const LossWeights& weights,
                       const FeatureExtractor& features) {
    if (pairs.empty()) throw Error(ErrorCode::empty_input, "no evaluation pairs");
    Generator generator = load_generator(checkpoint);

    Discriminator discriminator{nullptr};
    const bool adversarial = weights.adversarial > 0.0 && !checkpoint.discriminator.empty();
    if (adversarial) {
        const auto& first = checkpoint.discriminator.front();
        discriminator = build_discriminator(static_cast<int>(first.shape.at(1)), static_cast<int>(first.shape.at(0)), 0);
        import_parameters(*discriminator, checkpoint.discriminator);
        discriminator->eval();
    }

    torch::NoGradGuard guard;
    LossBreakdown sum;
    for (const auto& pair : pairs) {
        if (!pair.reference.same_extent(pair.input))
            throw Error(ErrorCode::dimension_mismatch, "reference frame does not match the input extent");
        if (pair.mask && (pair.mask->width != pair.input.width || pair.mask->height != pair.input.height))
            throw Error(ErrorCode::dimension_mismatch, "evaluation mask does not match the input extent");
        const Image output = infer_padded(generator, pair.input);
        Image mask_img(pair.input.width, pair.input.height, 1, 1.0f);
        if (pair.mask)
            for (size_t i = 0; i < pair.mask->bits.size(); ++i) mask_img.data[i] = pair.mask->bits[i] ? 1.0f : 0.0f;
        const auto terms = compute_loss(image_to_tensor(pair.input), image_to_tensor(output),
                                        image_to_tensor(pair.reference), image_to_tensor(mask_img), weights, &features,
                                        adversarial ? &discriminator : nullptr);
        sum.l1 += terms.values.l1;
        sum.adversarial_g += terms.values.adversarial_g;
        sum.adversarial_d += terms.values.adversarial_d;
        sum.perceptual += terms.values.perceptual;
        sum.total += terms.values.total;
    }
    const double n = static_cast<double>(pairs.size());
    return {sum.l1 / n, sum.adversarial_g / n, sum.adversarial_d / n, sum.perceptual / n, sum.total / n};
}

LossBreakdown evaluate(const Checkpoint& checkpoint, std::span<const EvalPair> pairs) {
    const TrainConfig config = TrainConfig::from_json(checkpoint.train_config);
    return evaluate(checkpoint, pairs, config.loss_weights, FeatureExtractor::from_config(config.perceptual));
}

}  // namespace patchstyle
