#include "patchstyle/temporal_filter.hpp"

#include <algorithm>
#include <cmath>

#include "patchstyle/error.hpp"
#include "patchstyle/registration.hpp"
#include "patchstyle/thread_pool.hpp"

namespace patchstyle {

namespace {

void validate(const Sequence& sequence, const TemporalFilterParams& params) {
    if (sequence.size() == 0) throw Error(ErrorCode::empty_input, "cannot filter an empty sequence");
    if (params.radius < 0) throw Error(ErrorCode::invalid_argument, "filter radius must be >= 0");
    if (!(params.sigma_t > 0.0) || !(params.sigma_r > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "filter sigmas must be positive");
    }
    if (params.motion) {
        const auto& m = *params.motion;
        if (m.grid_spacing <= 0 || m.block_radius <= 0 || m.search_radius <= 0) {
            throw Error(ErrorCode::invalid_argument, "motion compensation parameters must be positive");
        }
    }
}

// Per-pixel integer offsets aligning `center` to `neighbor`, from block matches on a
// coarse lattice; each pixel takes the displacement of its nearest lattice point.
std::vector<int> motion_offsets(const Image& center, const Image& neighbor, const MotionCompensation& m) {
    const int s = m.grid_spacing;
    const int gw = (center.width + s - 1) / s;
    const int gh = (center.height + s - 1) / s;
    std::vector<Vec2> points;
    points.reserve(static_cast<size_t>(gw) * gh);
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            points.push_back({static_cast<double>(std::min(gx * s + s / 2, center.width - 1)),
                              static_cast<double>(std::min(gy * s + s / 2, center.height - 1))});
        }
    }
    DisplacementField field = block_match(center, neighbor, points, m.block_radius, m.search_radius);
    std::vector<int> offsets(static_cast<size_t>(center.width) * center.height * 2);
    for (int y = 0; y < center.height; ++y) {
        int gy = std::min(y / s, gh - 1);
        for (int x = 0; x < center.width; ++x) {
            int gx = std::min(x / s, gw - 1);
            size_t k = static_cast<size_t>(gy) * gw + gx;
            size_t o = (static_cast<size_t>(y) * center.width + x) * 2;
            if (field.confident[k]) {
                offsets[o] = static_cast<int>(std::lround(field.vectors[k].x));
                offsets[o + 1] = static_cast<int>(std::lround(field.vectors[k].y));
            }
        }
    }
    return offsets;
}

}  // namespace

Frame filter_frame(const Sequence& sequence, size_t t, const TemporalFilterParams& params) {
    validate(sequence, params);
    if (t >= sequence.size()) throw Error(ErrorCode::index_out_of_range, "frame index out of range");
    const Image& center = sequence.frames[t].pixels;
    const int n = static_cast<int>(sequence.size());
    const int lo = std::max(0, static_cast<int>(t) - params.radius);
    const int hi = std::min(n - 1, static_cast<int>(t) + params.radius);
    const int C = center.channels;
    const size_t pixels = static_cast<size_t>(center.width) * center.height;

    std::vector<double> acc(pixels * C, 0.0);
    std::vector<double> norm(pixels, 0.0);
    const double inv_t = 1.0 / (2.0 * params.sigma_t * params.sigma_t);
    const double inv_r = 1.0 / (2.0 * params.sigma_r * params.sigma_r);

    for (int u = lo; u <= hi; ++u) {
        const Image& other = sequence.frames[u].pixels;
        const double dt = u - static_cast<int>(t);
        const double wt = std::exp(-dt * dt * inv_t);
        std::vector<int> offsets;
        if (params.motion && u != static_cast<int>(t)) offsets = motion_offsets(center, other, *params.motion);
        for (int y = 0; y < center.height; ++y) {
            for (int x = 0; x < center.width; ++x) {
                size_t p = static_cast<size_t>(y) * center.width + x;
                int sx = x;
                int sy = y;
                if (!offsets.empty()) {
                    sx = std::clamp(x + offsets[p * 2], 0, center.width - 1);
                    sy = std::clamp(y + offsets[p * 2 + 1], 0, center.height - 1);
                }
                const float* a = &center.data[p * C];
                const float* b = &other.data[(static_cast<size_t>(sy) * center.width + sx) * C];
                double d2 = 0.0;
                for (int c = 0; c < C; ++c) {
                    double d = static_cast<double>(b[c]) - a[c];
                    d2 += d * d;
                }
                double w = wt * std::exp(-d2 * inv_r);
                norm[p] += w;
                for (int c = 0; c < C; ++c) acc[p * C + c] += w * b[c];
            }
        }
    }

    Frame out{sequence.frames[t].index, Image(center.width, center.height, C)};
    for (size_t p = 0; p < pixels; ++p) {
        for (int c = 0; c < C; ++c) {
            // The center sample always carries weight 1, so norm >= 1.
            out.pixels.data[p * C + c] = static_cast<float>(acc[p * C + c] / norm[p]);
        }
    }
    return out;
}

Sequence bilateral_temporal_filter(const Sequence& sequence, const TemporalFilterParams& params, int workers) {
    validate(sequence, params);
    Sequence out = sequence;
    parallel_for(sequence.size(), workers, [&](size_t t) { out.frames[t] = filter_frame(sequence, t, params); });
    return out;
}

}  // namespace patchstyle
