#include "patchstyle/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/imgcodecs.hpp>

#include "patchstyle/error.hpp"

namespace patchstyle {

Image::Image(int w, int h, int c, float fill)
    : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

Mask::Mask(int w, int h, bool value)
    : width(w), height(h), bits(static_cast<size_t>(w) * h, value ? 1 : 0) {}

size_t Mask::count() const noexcept {
    return static_cast<size_t>(std::count_if(bits.begin(), bits.end(), [](uint8_t b) { return b != 0; }));
}

namespace {

uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<uint8_t>(std::lround(c * 255.0f));
}

Image from_bgr_mat(const cv::Mat& mat) {
    Image image(mat.cols, mat.rows, 3);
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < mat.cols; ++x) {
            image.at(x, y, 0) = row[x][2] / 255.0f;
            image.at(x, y, 1) = row[x][1] / 255.0f;
            image.at(x, y, 2) = row[x][0] / 255.0f;
        }
    }
    return image;
}

Mask from_gray_mat(const cv::Mat& mat) {
    Mask mask(mat.cols, mat.rows, false);
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) mask.set(x, y, row[x] >= 128);
    }
    return mask;
}

cv::Mat to_mat(const Image& image) {
    if (image.channels == 1) {
        cv::Mat mat(image.height, image.width, CV_8UC1);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) mat.at<uint8_t>(y, x) = to_byte(image.at(x, y, 0));
        return mat;
    }
    if (image.channels != 3)
        throw Error(ErrorCode::channel_mismatch,
                    "PNG export supports 1 or 3 channels, got " + std::to_string(image.channels));
    cv::Mat mat(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width; ++x)
            row[x] = cv::Vec3b(to_byte(image.at(x, y, 2)), to_byte(image.at(x, y, 1)), to_byte(image.at(x, y, 0)));
    }
    return mat;
}

}  // namespace

Image read_image_rgb(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) throw Error(ErrorCode::io, "cannot read image '" + path.string() + "'");
    return from_bgr_mat(mat);
}

Mask read_mask(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (mat.empty()) throw Error(ErrorCode::io, "cannot read mask '" + path.string() + "'");
    return from_gray_mat(mat);
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (!cv::imwrite(path.string(), to_mat(image)))
        throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    Image gray(mask.width, mask.height, 1);
    for (size_t i = 0; i < mask.bits.size(); ++i) gray.data[i] = mask.bits[i] ? 1.0f : 0.0f;
    write_png(path, gray);
}

std::vector<uint8_t> encode_png(const Image& image) {
    std::vector<uint8_t> bytes;
    if (!cv::imencode(".png", to_mat(image), bytes)) throw Error(ErrorCode::io, "PNG encoding failed");
    return bytes;
}

Image decode_png_rgb(std::span<const uint8_t> bytes) {
    cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<uint8_t*>(bytes.data()));
    cv::Mat mat = cv::imdecode(raw, cv::IMREAD_COLOR);
    if (mat.empty()) throw Error(ErrorCode::io, "cannot decode PNG payload");
    return from_bgr_mat(mat);
}

Mask decode_mask_png(std::span<const uint8_t> bytes) {
    cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<uint8_t*>(bytes.data()));
    cv::Mat mat = cv::imdecode(raw, cv::IMREAD_GRAYSCALE);
    if (mat.empty()) throw Error(ErrorCode::io, "cannot decode mask payload");
    return from_gray_mat(mat);
}

Image quantize_8bit(const Image& image) {
    Image out = image;
    for (float& v : out.data) v = to_byte(v) / 255.0f;
    return out;
}

Image concat_channels(const Image& a, const Image& b) {
    if (!a.same_extent(b))
        throw Error(ErrorCode::dimension_mismatch, "cannot concatenate images of different extent");
    Image out(a.width, a.height, a.channels + b.channels);
    for (size_t p = 0; p < a.pixel_count(); ++p) {
        std::copy_n(&a.data[p * a.channels], a.channels, &out.data[p * out.channels]);
        std::copy_n(&b.data[p * b.channels], b.channels, &out.data[p * out.channels + a.channels]);
    }
    return out;
}

Image crop(const Image& image, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > image.width || y0 + h > image.height)
        throw Error(ErrorCode::invalid_argument, "crop window outside image");
    Image out(w, h, image.channels);
    for (int y = 0; y < h; ++y)
        std::copy_n(&image.data[(static_cast<size_t>(y0 + y) * image.width + x0) * image.channels],
                    static_cast<size_t>(w) * image.channels, &out.data[static_cast<size_t>(y) * w * image.channels]);
    return out;
}

Image pad_to_multiple(const Image& image, int multiple) {
    const int w = (image.width + multiple - 1) / multiple * multiple;
    const int h = (image.height + multiple - 1) / multiple * multiple;
    if (w == image.width && h == image.height) return image;
    Image out(w, h, image.channels);
    for (int y = 0; y < h; ++y) {
        const int sy = reflect_index(y, image.height);
        for (int x = 0; x < w; ++x) {
            const int sx = reflect_index(x, image.width);
            for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(sx, sy, c);
        }
    }
    return out;
}

}  // namespace patchstyle
