#include "patchstyle/inference.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <numeric>
#include <random>

#include "patchstyle/error.hpp"
#include "patchstyle/thread_pool.hpp"
#include "patchstyle/trainer.hpp"

namespace patchstyle {

namespace {

int64_t default_memory_limit() {
    long pages = sysconf(_SC_PHYS_PAGES);
    long page = sysconf(_SC_PAGE_SIZE);
    if (pages <= 0 || page <= 0) return int64_t{4} << 30;
    return static_cast<int64_t>(pages) * page / 2;
}

}  // namespace

torch::Device device_from_environment() {
    const char* env = std::getenv("PATCHSTYLE_DEVICE");
    std::string name = env ? env : "cpu";
    if (name.empty() || name == "cpu") return torch::Device(torch::kCPU);
    torch::Device device(torch::kCPU);
    try {
        device = torch::Device(name);
    } catch (const std::exception&) {
        throw Error(ErrorCode::config, "unrecognized device '" + name + "'");
    }
    if (device.is_cuda() && !torch::cuda::is_available()) {
        throw Error(ErrorCode::resource, "device '" + name + "' requested but CUDA is not available");
    }
    return device;
}

int64_t estimate_inference_bytes(const NetConfig& config, int width, int height) {
    // Widest encoder/decoder level holds input, skip and output activations at once.
    int64_t pixels = static_cast<int64_t>(width) * height;
    int64_t total = pixels * (config.input_channels + config.output_channels);
    int64_t channels = config.base_filters;
    for (int s = 0; s <= config.downsample_steps; ++s) {
        total += 3 * pixels * channels;
        pixels = (pixels + 3) / 4;
        channels *= 2;
    }
    return total * static_cast<int64_t>(sizeof(float));
}

Stylizer::Stylizer(const Checkpoint& checkpoint, std::optional<torch::Device> device, int64_t memory_limit_bytes)
    : net_(checkpoint.net),
      step_(checkpoint.step),
      device_(device ? *device : device_from_environment()),
      memory_limit_(memory_limit_bytes > 0 ? memory_limit_bytes : default_memory_limit()),
      generator_(load_generator(checkpoint)) {
    generator_->to(device_);
    if (device_.is_cpu()) to_channels_last(*generator_);
}

Image Stylizer::stylize(const Image& frame, const GuidanceLayer* guidance, const Mask* mask, bool composite) const {
    if (frame.channels != 3) throw Error(ErrorCode::channel_mismatch, "frames must be RGB");
    if (uses_guidance() != (guidance != nullptr)) {
        throw Error(ErrorCode::channel_mismatch, uses_guidance()
                                                     ? "model was trained with guidance but none was given"
                                                     : "model was trained without guidance but guidance was given");
    }
    if (guidance && !guidance->pixels.same_extent(frame)) {
        throw Error(ErrorCode::dimension_mismatch, "guidance extent differs from the frame");
    }
    if (mask && (mask->width != frame.width || mask->height != frame.height)) {
        throw Error(ErrorCode::dimension_mismatch, "mask extent differs from the frame");
    }
    const int factor = net_.downsample_factor();
    const int pw = (frame.width + factor - 1) / factor * factor;
    const int ph = (frame.height + factor - 1) / factor * factor;
    int64_t need = estimate_inference_bytes(net_, pw, ph);
    if (need > memory_limit_) {
        throw Error(ErrorCode::resource, "frame " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                                             " needs about " + std::to_string(need >> 20) +
                                             " MiB, above the device limit of " +
                                             std::to_string(memory_limit_ >> 20) + " MiB");
    }

    Image input = guidance ? concat_channels(frame, guidance->pixels) : frame;
    Image padded = pad_to_multiple(input, factor);
    Image out;
    {
        torch::NoGradGuard no_grad;
        torch::Tensor x = image_to_tensor(padded).to(device_);
        if (device_.is_cpu()) x = channels_last(x);
        torch::Tensor y = generator_->forward(x).to(torch::kCPU);
        out = tensor_to_image(y);
    }
    if (out.width != frame.width || out.height != frame.height) out = crop(out, 0, 0, frame.width, frame.height);

    if (mask && composite) {
        for (int y = 0; y < frame.height; ++y) {
            for (int x = 0; x < frame.width; ++x) {
                if (mask->at(x, y)) continue;
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = frame.at(x, y, c);
            }
        }
    }
    return out;
}

Frame stylize_frame(const Stylizer& stylizer, const Frame& frame, const GuidanceLayer* guidance, const Mask* mask,
                    bool composite) {
    return {frame.index, stylizer.stylize(frame.pixels, guidance, mask, composite)};
}

Sequence stylize_sequence(const Stylizer& stylizer, const Sequence& sequence, int workers,
                          std::span<const size_t> order, bool composite) {
    if (workers < 1) throw Error(ErrorCode::invalid_argument, "workers must be >= 1");
    std::vector<size_t> schedule;
    if (order.empty()) {
        schedule.resize(sequence.size());
        std::iota(schedule.begin(), schedule.end(), size_t{0});
    } else {
        schedule.assign(order.begin(), order.end());
        std::vector<size_t> sorted = schedule;
        std::sort(sorted.begin(), sorted.end());
        for (size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] != i || sorted.size() != sequence.size()) {
                throw Error(ErrorCode::invalid_argument, "order must be a permutation of the frame positions");
            }
        }
    }
    if (stylizer.uses_guidance() && !sequence.has_guidance()) {
        throw Error(ErrorCode::channel_mismatch, "model needs guidance but the sequence has none");
    }
    Sequence out;
    out.frames.resize(sequence.size());
    out.names = sequence.names;
    out.masks = sequence.masks;
    parallel_for(schedule.size(), workers, [&](size_t k) {
        size_t i = schedule[k];
        const GuidanceLayer* g = stylizer.uses_guidance() ? &sequence.guidance[i] : nullptr;
        const Mask* m = composite && sequence.has_masks() ? &sequence.masks[i] : nullptr;
        out.frames[i] = stylize_frame(stylizer, sequence.frames[i], g, m, composite);
    });
    return out;
}

InferenceTiming measure_inference(const Stylizer& stylizer, int width, int height, int warmups, int runs) {
    if (runs < 1 || warmups < 0) throw Error(ErrorCode::invalid_argument, "runs must be >= 1 and warmups >= 0");
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image frame(width, height, 3);
    for (float& v : frame.data) v = u(rng);
    std::optional<GuidanceLayer> guidance;
    if (stylizer.uses_guidance()) {
        guidance = GuidanceLayer{Image(width, height, 3)};
        for (float& v : guidance->pixels.data) v = u(rng);
    }
    const GuidanceLayer* g = guidance ? &*guidance : nullptr;
    for (int i = 0; i < warmups; ++i) (void)stylizer.stylize(frame, g);
    std::vector<double> ms;
    ms.reserve(static_cast<size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        (void)stylizer.stylize(frame, g);
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    size_t n = ms.size();
    double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    return {median, median > 0 ? 1000.0 / median : 0.0, runs};
}

}  // namespace patchstyle
