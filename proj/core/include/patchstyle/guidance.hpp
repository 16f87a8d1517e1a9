#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "patchstyle/dataset.hpp"
#include "patchstyle/registration.hpp"

namespace patchstyle {

struct Gaussian {
    Vec2 center;  // rest position in keyframe pixels
    std::array<float, 3> color{};
    double sigma = 8.0;
    double amplitude = 1.0;
};

struct GaussianSet {
    int width = 0;
    int height = 0;
    std::vector<Gaussian> items;
};

/// Bilinear coordinates of a point inside one lattice cell.
struct GridAttachment {
    int cell_col = 0;
    int cell_row = 0;
    double u = 0.0;
    double v = 0.0;
};

int default_gaussian_count(int width, int height);

/// Uniform centers, RGB colors and sigmas; amplitude 1. Deterministic per seed.
GaussianSet generate_gaussians(int width, int height, int count, double sigma_min, double sigma_max, uint64_t seed);

GridAttachment attach(const DeformableGrid& grid, Vec2 rest_position);
Vec2 attached_position(const DeformableGrid& grid, const GridAttachment& attachment);

/// Sum of isotropic kernels at the grid-advected centers, clamped to [0,1].
GuidanceLayer rasterize_guidance(const GaussianSet& gaussians, const DeformableGrid& grid, int width, int height);

struct GuidanceParams {
    int grid_spacing = 16;
    double rigidity_weight = 1.0;
    ArapParams arap;
};

/// Guidance for one frame: registers the keyframe's rest grid against that frame.
GuidanceLayer guidance_for_frame(const Sequence& sequence, const Keyframe& keyframe, int frame,
                                 const GaussianSet& gaussians, const GuidanceParams& params);

/// Guidance for every frame of the sequence. Frames are computed independently, in
/// `order` when given, on `workers` threads; the result is indexed by frame.
std::vector<GuidanceLayer> propagate_guidance(const Sequence& sequence, const Keyframe& keyframe,
                                              const GaussianSet& gaussians, const GuidanceParams& params,
                                              std::span<const int> order = {}, int workers = 1);

/// Nearest keyframe index for a frame; ties go to the lower index.
int select_keyframe(int frame, std::span<const int> keyframe_indices);

}  // namespace patchstyle
