#include "patchstyle/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "patchstyle/error.hpp"
#include "patchstyle/thread_pool.hpp"

namespace patchstyle {

int default_gaussian_count(int width, int height) {
    return static_cast<int>((static_cast<long long>(width) * height) / 2000);
}

GaussianSet generate_gaussians(int width, int height, int count, double sigma_min, double sigma_max, uint64_t seed) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::invalid_argument, "guidance extent must be positive");
    if (count < 0) throw Error(ErrorCode::invalid_argument, "gaussian count must be >= 0");
    if (!(sigma_min > 0.0) || sigma_max < sigma_min) {
        throw Error(ErrorCode::invalid_argument, "sigma range must satisfy 0 < min <= max");
    }
    GaussianSet set;
    set.width = width;
    set.height = height;
    set.items.reserve(static_cast<size_t>(count));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, static_cast<double>(width - 1));
    std::uniform_real_distribution<double> uy(0.0, static_cast<double>(height - 1));
    std::uniform_real_distribution<float> uc(0.0f, 1.0f);
    std::uniform_real_distribution<double> us(sigma_min, sigma_max);
    for (int i = 0; i < count; ++i) {
        Gaussian g;
        g.center.x = ux(rng);
        g.center.y = uy(rng);
        for (float& c : g.color) c = uc(rng);
        g.sigma = sigma_max > sigma_min ? us(rng) : sigma_min;
        g.amplitude = 1.0;
        set.items.push_back(g);
    }
    return set;
}

GridAttachment attach(const DeformableGrid& grid, Vec2 rest_position) {
    double s = grid.spacing;
    double fx = rest_position.x / s;
    double fy = rest_position.y / s;
    GridAttachment a;
    a.cell_col = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.cols - 2);
    a.cell_row = std::clamp(static_cast<int>(std::floor(fy)), 0, grid.rows - 2);
    a.u = fx - a.cell_col;
    a.v = fy - a.cell_row;
    if (a.u < -1e-9 || a.u > 1.0 + 1e-9 || a.v < -1e-9 || a.v > 1.0 + 1e-9) {
        throw Error(ErrorCode::invalid_argument, "gaussian center lies outside the grid");
    }
    return a;
}

Vec2 attached_position(const DeformableGrid& grid, const GridAttachment& a) {
    auto k = grid.cell_corners(a.cell_col, a.cell_row);
    const auto& p = grid.current_points;
    return p[k[0]] * ((1 - a.u) * (1 - a.v)) + p[k[1]] * (a.u * (1 - a.v)) + p[k[2]] * ((1 - a.u) * a.v) +
           p[k[3]] * (a.u * a.v);
}

GuidanceLayer rasterize_guidance(const GaussianSet& gaussians, const DeformableGrid& grid, int width, int height) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::invalid_argument, "guidance extent must be positive");
    if (gaussians.width != 0 && (gaussians.width != width || gaussians.height != height)) {
        throw Error(ErrorCode::dimension_mismatch, "guidance extent differs from the gaussian set extent");
    }
    std::vector<double> acc(static_cast<size_t>(width) * height * 3, 0.0);
    for (const Gaussian& g : gaussians.items) {
        Vec2 pos = attached_position(grid, attach(grid, g.center));
        double cutoff = 7.0 * g.sigma;
        int x0 = std::max(0, static_cast<int>(std::floor(pos.x - cutoff)));
        int x1 = std::min(width - 1, static_cast<int>(std::ceil(pos.x + cutoff)));
        int y0 = std::max(0, static_cast<int>(std::floor(pos.y - cutoff)));
        int y1 = std::min(height - 1, static_cast<int>(std::ceil(pos.y + cutoff)));
        double inv = 1.0 / (2.0 * g.sigma * g.sigma);
        for (int y = y0; y <= y1; ++y) {
            double dy = y - pos.y;
            for (int x = x0; x <= x1; ++x) {
                double dx = x - pos.x;
                double k = g.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
                double* px = &acc[(static_cast<size_t>(y) * width + x) * 3];
                px[0] += k * g.color[0];
                px[1] += k * g.color[1];
                px[2] += k * g.color[2];
            }
        }
    }
    GuidanceLayer layer;
    layer.pixels = Image(width, height, 3);
    for (size_t i = 0; i < acc.size(); ++i) layer.pixels.data[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
    return layer;
}

GuidanceLayer guidance_for_frame(const Sequence& sequence, const Keyframe& keyframe, int frame,
                                 const GaussianSet& gaussians, const GuidanceParams& params) {
    if (frame < 0 || static_cast<size_t>(frame) >= sequence.size()) {
        throw Error(ErrorCode::index_out_of_range, "frame index " + std::to_string(frame) + " out of range");
    }
    if (keyframe.index < 0 || static_cast<size_t>(keyframe.index) >= sequence.size()) {
        throw Error(ErrorCode::index_out_of_range, "keyframe does not belong to the sequence");
    }
    const Image& key = sequence.frames[keyframe.index].pixels;
    const Image& cur = sequence.frames[frame].pixels;
    DeformableGrid grid = DeformableGrid::regular(key.width, key.height, params.grid_spacing, params.rigidity_weight);
    if (frame != keyframe.index) grid = arap_register(grid, key, cur, params.arap);
    return rasterize_guidance(gaussians, grid, key.width, key.height);
}

std::vector<GuidanceLayer> propagate_guidance(const Sequence& sequence, const Keyframe& keyframe,
                                              const GaussianSet& gaussians, const GuidanceParams& params,
                                              std::span<const int> order, int workers) {
    std::vector<int> frames;
    if (order.empty()) {
        for (size_t i = 0; i < sequence.size(); ++i) frames.push_back(static_cast<int>(i));
    } else {
        frames.assign(order.begin(), order.end());
    }
    std::vector<GuidanceLayer> out(sequence.size());
    parallel_for(frames.size(), workers, [&](size_t i) {
        int f = frames[i];
        out[static_cast<size_t>(f)] = guidance_for_frame(sequence, keyframe, f, gaussians, params);
    });
    return out;
}

int select_keyframe(int frame, std::span<const int> keyframe_indices) {
    if (keyframe_indices.empty()) throw Error(ErrorCode::empty_input, "no keyframes to select from");
    int best = keyframe_indices.front();
    for (int k : keyframe_indices) {
        int d = std::abs(k - frame);
        int bd = std::abs(best - frame);
        if (d < bd || (d == bd && k < best)) best = k;
    }
    return best;
}

}  // namespace patchstyle
