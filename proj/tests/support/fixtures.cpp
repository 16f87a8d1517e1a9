#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <random>

#include <unistd.h>

namespace patchstyle::testing {

namespace fs = std::filesystem;

Image smooth_noise(int width, int height, int cell, uint64_t seed) {
    const int gw = width / cell + 2;
    const int gh = height / cell + 2;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> lattice(static_cast<size_t>(gw) * gh * 3);
    for (float& v : lattice) v = u(rng);
    auto at = [&](int x, int y, int c) { return lattice[(static_cast<size_t>(y) * gw + x) * 3 + c]; };
    auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };

    Image out(width, height, 3);
    for (int y = 0; y < height; ++y) {
        double fy = static_cast<double>(y) / cell;
        int y0 = static_cast<int>(fy);
        double ty = smooth(fy - y0);
        for (int x = 0; x < width; ++x) {
            double fx = static_cast<double>(x) / cell;
            int x0 = static_cast<int>(fx);
            double tx = smooth(fx - x0);
            for (int c = 0; c < 3; ++c) {
                double top = at(x0, y0, c) * (1 - tx) + at(x0 + 1, y0, c) * tx;
                double bot = at(x0, y0 + 1, c) * (1 - tx) + at(x0 + 1, y0 + 1, c) * tx;
                out.at(x, y, c) = static_cast<float>(top * (1 - ty) + bot * ty);
            }
        }
    }
    return out;
}

Image texture(int width, int height, uint64_t seed) {
    Image coarse = smooth_noise(width, height, 9, seed);
    Image fine = smooth_noise(width, height, 3, seed + 1);
    Image out(width, height, 3);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = 0.6f * coarse.data[i] + 0.4f * fine.data[i];
    return out;
}

float sample_bilinear(const Image& image, double x, double y, int c) {
    x = std::clamp(x, 0.0, image.width - 1.0);
    y = std::clamp(y, 0.0, image.height - 1.0);
    int x0 = std::min(static_cast<int>(x), image.width - 2);
    int y0 = std::min(static_cast<int>(y), image.height - 2);
    double tx = x - x0;
    double ty = y - y0;
    double top = image.at(x0, y0, c) * (1 - tx) + image.at(x0 + 1, y0, c) * tx;
    double bot = image.at(x0, y0 + 1, c) * (1 - tx) + image.at(x0 + 1, y0 + 1, c) * tx;
    return static_cast<float>(top * (1 - ty) + bot * ty);
}

Image rotated_view(const Image& source, int ox, int oy, int width, int height, double degrees) {
    const double a = degrees * M_PI / 180.0;
    const double cs = std::cos(a);
    const double sn = std::sin(a);
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    Image out(width, height, source.channels);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double dx = x - cx;
            double dy = y - cy;
            double sx = cs * dx + sn * dy + cx + ox;
            double sy = -sn * dx + cs * dy + cy + oy;
            for (int c = 0; c < source.channels; ++c) out.at(x, y, c) = sample_bilinear(source, sx, sy, c);
        }
    }
    return out;
}

Image procedural_style(const Image& image) {
    const int w = image.width;
    const int h = image.height;
    std::vector<double> lum(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            lum[static_cast<size_t>(y) * w + x] =
                0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2);
        }
    }
    auto L = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return lum[static_cast<size_t>(y) * w + x];
    };
    Image out(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                        (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
            double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                        (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
            bool ink = std::sqrt(gx * gx + gy * gy) > 0.25;
            for (int c = 0; c < 3; ++c) {
                float post = std::min(std::floor(image.at(x, y, c) * 4.0f), 3.0f) / 3.0f;
                out.at(x, y, c) = ink ? 0.05f : post;
            }
        }
    }
    return out;
}

MovingShapeSequence moving_shape(int frames, int size) {
    const int span = size + 4 * frames;
    Image background = smooth_noise(span, span, 8, 3);
    for (float& v : background.data) v = 0.2f + 0.6f * v;
    Image skin = smooth_noise(256, 256, 6, 4);

    MovingShapeSequence seq;
    for (int t = 0; t < frames; ++t) {
        const double ang = 4.0 * t * M_PI / 180.0;
        const double cx = 50.0 + 2.0 * t;
        const double cy = 60.0 + 1.0 * t;
        Image img(size, size, 3);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                double dx = x - cx;
                double dy = y - cy;
                double u = std::cos(ang) * dx + std::sin(ang) * dy;
                double v = -std::sin(ang) * dx + std::cos(ang) * dy;
                bool inside = (u / 34) * (u / 34) + (v / 22) * (v / 22) <= 1.0;
                for (int c = 0; c < 3; ++c) {
                    if (inside) {
                        int gx = std::clamp(static_cast<int>(std::floor(u + 128)), 0, 255);
                        int gy = std::clamp(static_cast<int>(std::floor(v + 128)), 0, 255);
                        img.at(x, y, c) = skin.at(gx, gy, c);
                    } else {
                        img.at(x, y, c) = background.at(x + 3 * t, y + 2 * t, c);
                    }
                }
            }
        }
        seq.styles.push_back(procedural_style(img));
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

TrainConfig tiny_config(int64_t steps) {
    TrainConfig c;
    c.patch_size = 16;
    c.batch_size = 4;
    c.resnet_blocks = 1;
    c.base_filters = 4;
    c.discriminator_filters = 4;
    c.budget = Budget::of_steps(steps);
    c.checkpoint_interval_seconds = 3600.0;
    c.allow_out_of_range = true;
    return c;
}

void write_frames(const fs::path& dir, const std::vector<Image>& frames) {
    fs::create_directories(dir);
    for (size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.png", i);
        write_png(dir / name, frames[i]);
    }
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

}  // namespace patchstyle::testing
