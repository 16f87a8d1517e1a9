#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include <torch/torch.h>

#include "patchstyle/dataset.hpp"
#include "patchstyle/network.hpp"
#include "patchstyle/train_config.hpp"

namespace patchstyle {

/// Device named by PATCHSTYLE_DEVICE ("cpu" when unset). Unavailable devices raise a resource error.
torch::Device device_from_environment();

/// Rough peak activation footprint of one forward pass, in bytes.
int64_t estimate_inference_bytes(const NetConfig& config, int width, int height);

/// Read-only generator snapshot. `stylize` may be called from many threads at once.
class Stylizer {
public:
    explicit Stylizer(const Checkpoint& checkpoint, std::optional<torch::Device> device = std::nullopt,
                      int64_t memory_limit_bytes = 0);

    /// Pads to the downsample factor with reflection, runs the network and crops back.
    /// With a mask and `composite`, pixels outside the mask keep the input colors.
    Image stylize(const Image& frame, const GuidanceLayer* guidance = nullptr, const Mask* mask = nullptr,
                  bool composite = false) const;

    bool uses_guidance() const noexcept { return net_.input_channels > 3; }
    const NetConfig& net_config() const noexcept { return net_; }
    int64_t step() const noexcept { return step_; }

private:
    NetConfig net_;
    int64_t step_ = 0;
    torch::Device device_;
    int64_t memory_limit_;
    mutable Generator generator_{nullptr};
};

Frame stylize_frame(const Stylizer& stylizer, const Frame& frame, const GuidanceLayer* guidance = nullptr,
                    const Mask* mask = nullptr, bool composite = false);

/// Stylizes every frame independently; `order` (a permutation of frame positions,
/// empty for natural order) only changes scheduling. Masks are composited when
/// `composite` is set and the sequence carries masks.
Sequence stylize_sequence(const Stylizer& stylizer, const Sequence& sequence, int workers = 1,
                          std::span<const size_t> order = {}, bool composite = false);

struct InferenceTiming {
    double median_ms = 0.0;
    double fps = 0.0;
    int runs = 0;
};

/// Median wall time of `runs` full-frame passes after `warmups` discarded ones.
InferenceTiming measure_inference(const Stylizer& stylizer, int width, int height, int warmups = 2, int runs = 10);

}  // namespace patchstyle
