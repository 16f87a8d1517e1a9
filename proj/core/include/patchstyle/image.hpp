#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace patchstyle {

/// Interleaved (HWC) float image. Pixel values are expected in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f);

    float& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }

    bool empty() const noexcept { return width == 0 || height == 0; }
    bool same_extent(const Image& other) const noexcept {
        return width == other.width && height == other.height;
    }
    size_t pixel_count() const noexcept { return static_cast<size_t>(width) * height; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Binary region of interest with the same extent as the frame it annotates.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> bits;

    Mask() = default;
    Mask(int w, int h, bool value);

    static Mask full(int w, int h) { return Mask(w, h, true); }

    bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
    size_t count() const noexcept;

    friend bool operator==(const Mask&, const Mask&) = default;
};

Image read_image_rgb(const std::filesystem::path& path);
/// Grayscale read thresholded at 128.
Mask read_mask(const std::filesystem::path& path);

/// Writes an 8-bit PNG (1 or 3 channels). Values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

std::vector<uint8_t> encode_png(const Image& image);
Image decode_png_rgb(std::span<const uint8_t> bytes);
Mask decode_mask_png(std::span<const uint8_t> bytes);

/// Quantizes through the 8-bit representation used on disk.
Image quantize_8bit(const Image& image);

/// Concatenates channels of images with equal extent (e.g. RGB + guidance).
Image concat_channels(const Image& a, const Image& b);
Image crop(const Image& image, int x0, int y0, int w, int h);

/// Mirror index without edge repetition (-1 -> 1, n -> n-2).
inline int reflect_index(int i, int n) noexcept {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

/// Pads right/bottom by reflection so the result has width/height divisible by `multiple`.
Image pad_to_multiple(const Image& image, int multiple);

}  // namespace patchstyle
