#include "patchstyle/net_config.hpp"

#include <vector>

#include "patchstyle/error.hpp"

namespace patchstyle {

void NetConfig::validate() const {
    if (resnet_blocks < 1) throw Error(ErrorCode::config, "resnet_blocks must be at least 1");
    if (base_filters < 1) throw Error(ErrorCode::config, "base_filters must be positive");
    if (downsample_steps < 0 || downsample_steps > 6) throw Error(ErrorCode::config, "downsample_steps must be in [0,6]");
    if (input_channels != 3 && input_channels != 6) throw Error(ErrorCode::config, "input_channels must be 3 or 6");
    if (output_channels != 3) throw Error(ErrorCode::config, "output_channels must be 3");
}

nlohmann::json NetConfig::to_json() const {
    return {{"resnet_blocks", resnet_blocks},
            {"base_filters", base_filters},
            {"downsample_steps", downsample_steps},
            {"input_channels", input_channels},
            {"output_channels", output_channels}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
    NetConfig c;
    c.resnet_blocks = j.value("resnet_blocks", c.resnet_blocks);
    c.base_filters = j.value("base_filters", c.base_filters);
    c.downsample_steps = j.value("downsample_steps", c.downsample_steps);
    c.input_channels = j.value("input_channels", c.input_channels);
    c.output_channels = j.value("output_channels", c.output_channels);
    return c;
}

// ---------------------------------------------------------------------------

ReceptiveField& ReceptiveField::conv(int kernel, int stride) {
    const int reach = kernel / 2;
    lo -= scale * reach;
    hi += scale * reach;
    scale *= stride;
    return *this;
}

ReceptiveField& ReceptiveField::upsample(int factor) {
    // Nearest upsampling reads the coarse pixel at floor(x / factor), whose anchor sits
    // up to (factor - 1) fine pixels to the left/top.
    scale /= factor;
    lo -= (factor - 1) * scale;
    return *this;
}

ReceptiveField ReceptiveField::merge(const ReceptiveField& a, const ReceptiveField& b) {
    if (a.scale != b.scale) throw Error(ErrorCode::invalid_argument, "merging feature maps of different scale");
    return {a.scale, std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

int receptive_radius(const NetConfig& config) {
    config.validate();
    std::vector<ReceptiveField> skips;
    ReceptiveField f;
    f.conv(3);
    skips.push_back(f);
    for (int s = 0; s < config.downsample_steps; ++s) {
        f.conv(3, 2);
        skips.push_back(f);
    }
    for (int b = 0; b < config.resnet_blocks; ++b) {
        ReceptiveField branch = f;
        branch.conv(3).conv(3);
        f = ReceptiveField::merge(f, branch);
    }
    for (int s = config.downsample_steps; s >= 1; --s) {
        f.upsample(2);
        f = ReceptiveField::merge(f, skips[s - 1]);
        f.conv(3);
    }
    f.conv(3);
    return f.radius();
}

}  // namespace patchstyle
