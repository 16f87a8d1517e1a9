#pragma once

#include <algorithm>

#include <nlohmann/json.hpp>

namespace patchstyle {

struct NetConfig {
    int resnet_blocks = 7;
    int base_filters = 32;
    int downsample_steps = 2;
    int input_channels = 3;  // 3, or 6 with guidance
    int output_channels = 3;

    void validate() const;
    int downsample_factor() const { return 1 << downsample_steps; }

    nlohmann::json to_json() const;
    static NetConfig from_json(const nlohmann::json& j);

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Dependency interval of one feature pixel, in input pixels relative to the
/// pixel's anchor. `scale` is the input-pixel pitch of the current feature map.
struct ReceptiveField {
    int scale = 1;
    int lo = 0;
    int hi = 0;

    ReceptiveField& conv(int kernel, int stride = 1);
    ReceptiveField& upsample(int factor);
    static ReceptiveField merge(const ReceptiveField& a, const ReceptiveField& b);

    int radius() const { return std::max(-lo, hi); }
};

/// Chebyshev radius of the generator's receptive field, computed from its layer stack.
int receptive_radius(const NetConfig& config);

}  // namespace patchstyle
