#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "patchstyle/image.hpp"

namespace patchstyle {

struct Frame {
    int index = 0;
    Image pixels;  // RGB in [0,1]
};

/// Auxiliary RGB input channels (rasterized Gaussian mixture).
struct GuidanceLayer {
    Image pixels;
};

struct Sequence {
    std::vector<Frame> frames;
    std::vector<Mask> masks;              // empty, or one per frame
    std::vector<GuidanceLayer> guidance;  // empty, or one per frame
    std::vector<std::string> names;       // source file names, empty for synthetic sequences

    size_t size() const noexcept { return frames.size(); }
    bool empty() const noexcept { return frames.empty(); }
    int width() const { return frames.empty() ? 0 : frames.front().pixels.width; }
    int height() const { return frames.empty() ? 0 : frames.front().pixels.height; }
    bool has_masks() const noexcept { return !masks.empty(); }
    bool has_guidance() const noexcept { return !guidance.empty(); }

    /// Network input for frame i: RGB, plus guidance channels when present.
    Image network_input(size_t i) const;

    /// Throws when frames disagree in extent or indices are not contiguous.
    void validate() const;
};

Sequence make_sequence(std::vector<Image> frames);

struct Keyframe {
    int index = 0;
    Image input;
    Image style;
    Mask mask;
    std::optional<GuidanceLayer> guidance;

    Image network_input() const;
    int input_channels() const { return guidance ? 6 : 3; }
};

struct KeyframeSpec {
    int index = 0;
    std::filesystem::path style;
    std::optional<std::filesystem::path> mask;
};

/// JSON list of {index, style, mask?}. Relative paths are resolved against `base_dir`.
std::vector<KeyframeSpec> keyframe_specs_from_json(const nlohmann::json& list,
                                                   const std::filesystem::path& base_dir);
std::vector<KeyframeSpec> read_keyframe_specs(const std::filesystem::path& file);

/// Lists *.png files in lexicographic order.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& directory);

Sequence load_sequence(const std::filesystem::path& directory,
                       const std::optional<std::filesystem::path>& mask_directory = std::nullopt);

/// Attaches guidance PNGs paired with frames by file name.
void load_guidance(Sequence& sequence, const std::filesystem::path& directory);

/// Builds a keyframe from in-memory data. A missing mask means the whole frame is stylized.
Keyframe make_keyframe(const Sequence& sequence, int index, Image style,
                       std::optional<Mask> mask = std::nullopt);

std::vector<Keyframe> load_keyframes(const Sequence& sequence, std::span<const KeyframeSpec> specs);

struct PatchOrigin {
    int keyframe = 0;  // position in the keyframe list
    int x = 0;         // patch center
    int y = 0;
};

/// Planar (NCHW) training batch. Inputs, targets and loss masks are co-located crops.
struct PatchBatch {
    int count = 0;
    int width = 0;
    int height = 0;
    int input_channels = 3;
    std::vector<float> inputs;      // count x input_channels x height x width
    std::vector<float> targets;     // count x 3 x height x width
    std::vector<float> loss_masks;  // count x height x width, 0 or 1
    std::vector<PatchOrigin> origins;

    int patch_size() const noexcept { return width; }
};

/// Uniform sampler over the pooled set of masked pixels of all keyframes.
class PatchSampler {
public:
    PatchSampler(std::vector<Keyframe> keyframes, int patch_size);

    PatchBatch sample(int batch_size, std::mt19937_64& rng) const;
    /// Cuts patches centered at the given origins.
    PatchBatch extract(std::span<const PatchOrigin> origins) const;

    size_t pool_size() const noexcept { return centers_.size(); }
    int patch_size() const noexcept { return patch_size_; }
    const std::vector<Keyframe>& keyframes() const noexcept { return keyframes_; }

private:
    struct Center {
        uint32_t keyframe;
        uint32_t offset;  // y * width + x
    };

    std::vector<Keyframe> keyframes_;
    int patch_size_;
    int channels_;
    std::vector<Center> centers_;
};

PatchBatch sample_patch_batch(std::span<const Keyframe> keyframes, int patch_size, int batch_size,
                              std::mt19937_64& rng);

/// One batch entry per keyframe holding the entire frame, reflection-padded to `multiple`
/// with the padding excluded from the loss mask.
PatchBatch full_frame_batch(std::span<const Keyframe> keyframes, int multiple);

/// Regular tiling of a keyframe with square patches at the given stride.
PatchBatch tile_patches(const Keyframe& keyframe, int patch_size, int stride);

}  // namespace patchstyle
