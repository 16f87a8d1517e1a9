#pragma once

#include <optional>

#include "patchstyle/dataset.hpp"

namespace patchstyle {

struct MotionCompensation {
    int grid_spacing = 8;
    int block_radius = 4;
    int search_radius = 6;
};

struct TemporalFilterParams {
    int radius = 3;        // frames
    double sigma_t = 1.5;  // frames
    double sigma_r = 0.1;  // intensity
    std::optional<MotionCompensation> motion;
};

/// Filters frame t from its clipped window [t - radius, t + radius]. Each output pixel
/// is the normalized average of co-located (or motion-aligned) samples weighted by
/// exp(-dt^2 / 2 sigma_t^2) * exp(-|dI|^2 / 2 sigma_r^2), with |dI| the RGB distance.
Frame filter_frame(const Sequence& sequence, size_t t, const TemporalFilterParams& params);

Sequence bilateral_temporal_filter(const Sequence& sequence, const TemporalFilterParams& params, int workers = 1);

}  // namespace patchstyle
