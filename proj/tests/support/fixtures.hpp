#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "patchstyle/dataset.hpp"
#include "patchstyle/error.hpp"
#include "patchstyle/image.hpp"
#include "patchstyle/train_config.hpp"

namespace patchstyle::testing {

/// Code of the patchstyle::Error thrown by `fn`, or nullopt when it returns normally.
template <class Fn>
std::optional<ErrorCode> thrown_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

/// Lattice noise with `cell`-pixel spacing, smoothstep-interpolated, RGB in [0,1].
Image smooth_noise(int width, int height, int cell, uint64_t seed);

/// Sum of two smooth-noise octaves: textured enough for block matching.
Image texture(int width, int height, uint64_t seed);

/// Bilinear sample with border clamping.
float sample_bilinear(const Image& image, double x, double y, int c);

/// Content rotated by `degrees` about (cx, cy): out(p) = src(R^-1 (p - c) + c), read
/// from `source` offset by (ox, oy) so no border is ever sampled.
Image rotated_view(const Image& source, int ox, int oy, int width, int height, double degrees);

/// Posterize to 4 levels and ink strong luminance edges.
Image procedural_style(const Image& image);

struct MovingShapeSequence {
    std::vector<Image> frames;
    std::vector<Image> styles;
};

/// Panning textured background with a textured ellipse that translates and rotates.
MovingShapeSequence moving_shape(int frames = 20, int size = 128);

double mean_abs_diff(const Image& a, const Image& b);
double max_abs_diff(const Image& a, const Image& b);

/// Small fast network settings for tests that only exercise plumbing.
TrainConfig tiny_config(int64_t steps);

/// Writes frames as 00000.png, 00001.png, ... into `dir`.
void write_frames(const std::filesystem::path& dir, const std::vector<Image>& frames);

class TempDir {
public:
    explicit TempDir(const std::string& tag = "patchstyle");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace patchstyle::testing
