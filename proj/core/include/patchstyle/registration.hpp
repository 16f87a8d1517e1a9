#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "patchstyle/image.hpp"

namespace patchstyle {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Per-point displacements laid out on a width x height lattice (height 1 for plain point lists).
struct DisplacementField {
    int width = 0;
    int height = 0;
    std::vector<Vec2> vectors;
    std::vector<uint8_t> confident;

    const Vec2& at(int col, int row) const { return vectors[static_cast<size_t>(row) * width + col]; }
};

struct BlockMatchParams {
    int block_radius = 7;
    int search_radius = 11;
    /// Parabolic refinement of the SSD minimum along each axis.
    bool subpixel = false;
};

struct BlockMatch {
    Vec2 displacement;
    bool confident = true;
    double cost = 0.0;     // mean squared difference per compared pixel
    double overlap = 1.0;  // fraction of the block compared at the best match
};

/// Exhaustive SSD search. Compares the reference block centered at `reference_at`
/// with target blocks centered at `search_center + d` for |d|_inf <= search_radius.
/// Only pixels inside both images are compared, and candidates overlapping less than
/// an eighth of the block are skipped. Ties prefer the smaller |d|, then row-major
/// order. Constant reference blocks, or blocks with no usable candidate, are
/// reported low-confidence with zero displacement.
BlockMatch match_block(const Image& reference, Vec2 reference_at, const Image& target, Vec2 search_center,
                       const BlockMatchParams& params);

/// Integer displacement of every point between `reference` and `target`.
DisplacementField block_match(const Image& reference, const Image& target, std::span<const Vec2> points,
                              int block_radius, int search_radius);

struct DeformableGrid {
    int spacing = 16;
    int cols = 0;
    int rows = 0;
    std::vector<Vec2> rest_points;
    std::vector<Vec2> current_points;
    double rigidity_weight = 1.0;

    /// Lattice at multiples of `spacing` covering [0,width-1] x [0,height-1].
    static DeformableGrid regular(int width, int height, int spacing, double rigidity_weight = 1.0);

    size_t index(int col, int row) const { return static_cast<size_t>(row) * cols + col; }
    int cell_count() const { return (cols - 1) * (rows - 1); }
    /// Corner indices of cell (cx, cy): top-left, top-right, bottom-left, bottom-right.
    std::array<size_t, 4> cell_corners(int cx, int cy) const;
};

struct ArapParams {
    int iterations = 10;
    int inner_iterations = 5;
    int block_radius = 7;
    int search_radius = 11;
};

/// Objective of each regularization solve, recorded after every inner iteration.
struct ArapTrace {
    std::vector<std::vector<double>> energies;
};

/// Alternates block matching at the current points with an as-rigid-as-possible
/// regularization that minimizes
///   sum_i c_i |p_i - t_i|^2 + w * sum_cells sum_pairs |(p_i - p_j) - R_c (r_i - r_j)|^2
/// over positions p with per-cell rotations R_c, where t are the matched targets,
/// c_i the match confidences (block overlap, 0 when unmatched), r the rest lattice
/// and w the rigidity weight.
DeformableGrid arap_register(const DeformableGrid& grid, const Image& reference, const Image& target,
                             const ArapParams& params, ArapTrace* trace = nullptr);

/// Best-fit rotation angle (radians) of every cell, row-major.
std::vector<double> cell_rotations(const DeformableGrid& grid);

/// Rigidity term with best-fit rotations.
double rigidity_energy(const DeformableGrid& grid);

/// Mean relative change of lattice edge lengths (horizontal and vertical edges).
double mean_edge_length_change(const DeformableGrid& grid);

/// Draws the current lattice onto an RGB image.
void draw_grid_overlay(Image& image, const DeformableGrid& grid);

}  // namespace patchstyle
