#include "patchstyle/registration.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchstyle/error.hpp"

namespace patchstyle {

namespace {

bool inside(const Image& img, int x, int y) { return x >= 0 && y >= 0 && x < img.width && y < img.height; }

struct BlockCost {
    double cost = std::numeric_limits<double>::infinity();
    int compared = 0;
};

// Mean squared difference over the pixels that fall inside both images. Too small an
// overlap gives an infinite cost.
BlockCost block_ssd(const Image& ref, int rx, int ry, const Image& tgt, int tx, int ty, int radius) {
    double sum = 0.0;
    int count = 0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (!inside(ref, rx + dx, ry + dy) || !inside(tgt, tx + dx, ty + dy)) continue;
            for (int c = 0; c < ref.channels; ++c) {
                double d = ref.at(rx + dx, ry + dy, c) - tgt.at(tx + dx, ty + dy, c);
                sum += d * d;
            }
            ++count;
        }
    }
    const int side = 2 * radius + 1;
    if (count == 0 || count * 8 < side * side) return {};
    return {sum / count, count};
}

bool block_is_constant(const Image& ref, int rx, int ry, int radius) {
    for (int c = 0; c < ref.channels; ++c) {
        float lo = std::numeric_limits<float>::max();
        float hi = std::numeric_limits<float>::lowest();
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                if (!inside(ref, rx + dx, ry + dy)) continue;
                float v = ref.at(rx + dx, ry + dy, c);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (hi - lo > 1e-6f) return false;
    }
    return true;
}

// Vertex of the parabola through (-1, a), (0, b), (1, c), limited to half a pixel.
double parabolic_offset(double a, double b, double c) {
    if (!std::isfinite(a) || !std::isfinite(c)) return 0.0;
    double denom = a - 2.0 * b + c;
    if (denom <= 1e-12) return 0.0;
    return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

double rotation_angle(const DeformableGrid& grid, int cx, int cy, const std::vector<Vec2>& points) {
    auto corners = grid.cell_corners(cx, cy);
    double s = 0.0;
    double c = 0.0;
    for (int a = 0; a < 4; ++a) {
        for (int b = a + 1; b < 4; ++b) {
            Vec2 r = grid.rest_points[corners[a]] - grid.rest_points[corners[b]];
            Vec2 q = points[corners[a]] - points[corners[b]];
            s += r.x * q.y - r.y * q.x;
            c += r.x * q.x + r.y * q.y;
        }
    }
    if (std::abs(s) < 1e-12 && std::abs(c) < 1e-12) return 0.0;
    return std::atan2(s, c);
}

double cell_rigidity(const DeformableGrid& grid, int cx, int cy, const std::vector<Vec2>& points, double angle) {
    auto corners = grid.cell_corners(cx, cy);
    double cs = std::cos(angle);
    double sn = std::sin(angle);
    double e = 0.0;
    for (int a = 0; a < 4; ++a) {
        for (int b = a + 1; b < 4; ++b) {
            Vec2 r = grid.rest_points[corners[a]] - grid.rest_points[corners[b]];
            Vec2 q = points[corners[a]] - points[corners[b]];
            double ex = q.x - (cs * r.x - sn * r.y);
            double ey = q.y - (sn * r.x + cs * r.y);
            e += ex * ex + ey * ey;
        }
    }
    return e;
}

struct RegularizationProblem {
    const DeformableGrid& grid;
    const std::vector<Vec2>& targets;
    const std::vector<double>& confidence;
    double anchor;
    const std::vector<Vec2>& anchor_points;

    double energy(const std::vector<Vec2>& p, const std::vector<double>& angles) const {
        double e = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            Vec2 d = p[i] - targets[i];
            Vec2 a = p[i] - anchor_points[i];
            e += confidence[i] * (d.x * d.x + d.y * d.y) + anchor * (a.x * a.x + a.y * a.y);
        }
        int cells_x = grid.cols - 1;
        for (int cy = 0; cy < grid.rows - 1; ++cy) {
            for (int cx = 0; cx < cells_x; ++cx) {
                e += grid.rigidity_weight * cell_rigidity(grid, cx, cy, p, angles[cy * cells_x + cx]);
            }
        }
        return e;
    }
};

}  // namespace

double Vec2::norm() const { return std::hypot(x, y); }

BlockMatch match_block(const Image& reference, Vec2 reference_at, const Image& target, Vec2 search_center,
                       const BlockMatchParams& params) {
    if (params.block_radius <= 0 || params.search_radius <= 0) {
        throw Error(ErrorCode::invalid_argument, "block and search radii must be positive");
    }
    if (reference.channels != target.channels) {
        throw Error(ErrorCode::channel_mismatch, "reference and target channel counts differ");
    }
    int rx = static_cast<int>(std::lround(reference_at.x));
    int ry = static_cast<int>(std::lround(reference_at.y));
    int cx = static_cast<int>(std::lround(search_center.x));
    int cy = static_cast<int>(std::lround(search_center.y));
    Vec2 base{static_cast<double>(cx - rx), static_cast<double>(cy - ry)};

    BlockMatch result;
    if (block_is_constant(reference, rx, ry, params.block_radius)) {
        result.confident = false;
        result.displacement = {};
        return result;
    }

    const int sr = params.search_radius;
    const int side = 2 * sr + 1;
    std::vector<double> costs(static_cast<size_t>(side) * side);
    double best = std::numeric_limits<double>::infinity();
    int best_dx = 0;
    int best_dy = 0;
    int best_mag = std::numeric_limits<int>::max();
    int best_compared = 0;
    for (int dy = -sr; dy <= sr; ++dy) {
        for (int dx = -sr; dx <= sr; ++dx) {
            BlockCost bc = block_ssd(reference, rx, ry, target, cx + dx, cy + dy, params.block_radius);
            costs[static_cast<size_t>(dy + sr) * side + (dx + sr)] = bc.cost;
            // Row-major scan: a later candidate wins only on strictly lower cost or
            // an equal cost at strictly smaller magnitude.
            int tx = cx + dx - rx;
            int ty = cy + dy - ry;
            int mag = tx * tx + ty * ty;
            if (bc.cost < best || (bc.cost == best && std::isfinite(bc.cost) && mag < best_mag)) {
                best = bc.cost;
                best_dx = dx;
                best_dy = dy;
                best_mag = mag;
                best_compared = bc.compared;
            }
        }
    }
    if (!std::isfinite(best)) {
        result.confident = false;
        result.overlap = 0.0;
        result.displacement = {};
        return result;
    }
    const int block = 2 * params.block_radius + 1;
    result.overlap = static_cast<double>(best_compared) / (block * block);
    result.cost = best;
    result.displacement = base + Vec2{static_cast<double>(best_dx), static_cast<double>(best_dy)};
    if (params.subpixel && best > 0.0) {
        auto cost_at = [&](int dx, int dy) {
            return costs[static_cast<size_t>(dy + sr) * side + (dx + sr)];
        };
        if (best_dx > -sr && best_dx < sr) {
            result.displacement.x +=
                parabolic_offset(cost_at(best_dx - 1, best_dy), best, cost_at(best_dx + 1, best_dy));
        }
        if (best_dy > -sr && best_dy < sr) {
            result.displacement.y +=
                parabolic_offset(cost_at(best_dx, best_dy - 1), best, cost_at(best_dx, best_dy + 1));
        }
    }
    return result;
}

DisplacementField block_match(const Image& reference, const Image& target, std::span<const Vec2> points,
                              int block_radius, int search_radius) {
    if (!reference.same_extent(target)) {
        throw Error(ErrorCode::dimension_mismatch, "reference and target extents differ");
    }
    BlockMatchParams params{block_radius, search_radius, false};
    DisplacementField field;
    field.width = static_cast<int>(points.size());
    field.height = 1;
    field.vectors.reserve(points.size());
    field.confident.reserve(points.size());
    for (const Vec2& p : points) {
        if (p.x < 0 || p.y < 0 || p.x > reference.width - 1 || p.y > reference.height - 1) {
            throw Error(ErrorCode::invalid_argument, "block-match point outside the reference frame");
        }
        BlockMatch m = match_block(reference, p, target, p, params);
        field.vectors.push_back(m.displacement);
        field.confident.push_back(m.confident ? 1 : 0);
    }
    return field;
}

DeformableGrid DeformableGrid::regular(int width, int height, int spacing, double rigidity_weight) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::invalid_argument, "grid extent must be positive");
    if (spacing <= 0) throw Error(ErrorCode::invalid_argument, "grid spacing must be positive");
    if (!(rigidity_weight > 0.0)) throw Error(ErrorCode::invalid_argument, "rigidity weight must be positive");
    DeformableGrid g;
    g.spacing = spacing;
    g.rigidity_weight = rigidity_weight;
    g.cols = std::max(2, (width - 1 + spacing - 1) / spacing + 1);
    g.rows = std::max(2, (height - 1 + spacing - 1) / spacing + 1);
    g.rest_points.reserve(static_cast<size_t>(g.cols) * g.rows);
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            g.rest_points.push_back({static_cast<double>(c * spacing), static_cast<double>(r * spacing)});
        }
    }
    g.current_points = g.rest_points;
    return g;
}

std::array<size_t, 4> DeformableGrid::cell_corners(int cx, int cy) const {
    return {index(cx, cy), index(cx + 1, cy), index(cx, cy + 1), index(cx + 1, cy + 1)};
}

DeformableGrid arap_register(const DeformableGrid& grid, const Image& reference, const Image& target,
                             const ArapParams& params, ArapTrace* trace) {
    if (params.iterations < 1) throw Error(ErrorCode::invalid_argument, "ARAP iterations must be >= 1");
    if (params.inner_iterations < 1) throw Error(ErrorCode::invalid_argument, "inner iterations must be >= 1");
    if (grid.current_points.size() != grid.rest_points.size()) {
        throw Error(ErrorCode::invalid_argument, "grid point sets differ in size");
    }
    if (!reference.same_extent(target)) {
        throw Error(ErrorCode::dimension_mismatch, "reference and target extents differ");
    }

    const size_t n = grid.rest_points.size();
    const int cells_x = grid.cols - 1;
    const int cells_y = grid.rows - 1;
    const double w = grid.rigidity_weight;
    const double anchor = 1e-6 * w;
    BlockMatchParams bm{params.block_radius, params.search_radius, true};

    // The system matrix depends only on confidences; the Laplacian part is fixed.
    std::vector<Eigen::Triplet<double>> laplacian;
    laplacian.reserve(static_cast<size_t>(cells_x) * cells_y * 24);
    for (int cy = 0; cy < cells_y; ++cy) {
        for (int cx = 0; cx < cells_x; ++cx) {
            auto k = grid.cell_corners(cx, cy);
            for (int a = 0; a < 4; ++a) {
                for (int b = a + 1; b < 4; ++b) {
                    auto i = static_cast<int>(k[a]);
                    auto j = static_cast<int>(k[b]);
                    laplacian.emplace_back(i, i, w);
                    laplacian.emplace_back(j, j, w);
                    laplacian.emplace_back(i, j, -w);
                    laplacian.emplace_back(j, i, -w);
                }
            }
        }
    }

    DeformableGrid out = grid;
    std::vector<Vec2> targets(n);
    std::vector<double> confidence(n);
    std::vector<double> angles(static_cast<size_t>(cells_x) * cells_y);

    for (int it = 0; it < params.iterations; ++it) {
        for (size_t i = 0; i < n; ++i) {
            const Vec2& r = out.rest_points[i];
            Vec2 rp{std::clamp(r.x, 0.0, reference.width - 1.0), std::clamp(r.y, 0.0, reference.height - 1.0)};
            BlockMatch m = match_block(reference, rp, target, out.current_points[i] + (rp - r), bm);
            targets[i] = r + m.displacement;
            confidence[i] = m.confident ? m.overlap : 0.0;
        }

        std::vector<Eigen::Triplet<double>> triplets = laplacian;
        for (size_t i = 0; i < n; ++i) {
            triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), confidence[i] + anchor);
        }
        Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        A.setFromTriplets(triplets.begin(), triplets.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
        if (solver.info() != Eigen::Success) {
            throw Error(ErrorCode::resource, "ARAP system factorization failed");
        }

        const std::vector<Vec2> start = out.current_points;
        RegularizationProblem problem{out, targets, confidence, anchor, start};
        std::vector<double> energies;
        std::vector<Vec2>& p = out.current_points;
        for (int inner = 0; inner < params.inner_iterations; ++inner) {
            for (int cy = 0; cy < cells_y; ++cy) {
                for (int cx = 0; cx < cells_x; ++cx) {
                    angles[static_cast<size_t>(cy) * cells_x + cx] = rotation_angle(out, cx, cy, p);
                }
            }
            if (inner == 0 && trace) energies.push_back(problem.energy(p, angles));

            Eigen::VectorXd bx = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
            Eigen::VectorXd by = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
            for (size_t i = 0; i < n; ++i) {
                bx[i] = confidence[i] * targets[i].x + anchor * start[i].x;
                by[i] = confidence[i] * targets[i].y + anchor * start[i].y;
            }
            for (int cy = 0; cy < cells_y; ++cy) {
                for (int cx = 0; cx < cells_x; ++cx) {
                    double ang = angles[static_cast<size_t>(cy) * cells_x + cx];
                    double cs = std::cos(ang);
                    double sn = std::sin(ang);
                    auto k = out.cell_corners(cx, cy);
                    for (int a = 0; a < 4; ++a) {
                        for (int b = a + 1; b < 4; ++b) {
                            Vec2 r = out.rest_points[k[a]] - out.rest_points[k[b]];
                            double ex = cs * r.x - sn * r.y;
                            double ey = sn * r.x + cs * r.y;
                            bx[k[a]] += w * ex;
                            by[k[a]] += w * ey;
                            bx[k[b]] -= w * ex;
                            by[k[b]] -= w * ey;
                        }
                    }
                }
            }
            Eigen::VectorXd x = solver.solve(bx);
            Eigen::VectorXd y = solver.solve(by);
            for (size_t i = 0; i < n; ++i) p[i] = {x[i], y[i]};

            if (trace) {
                for (int cy = 0; cy < cells_y; ++cy) {
                    for (int cx = 0; cx < cells_x; ++cx) {
                        angles[static_cast<size_t>(cy) * cells_x + cx] = rotation_angle(out, cx, cy, p);
                    }
                }
                energies.push_back(problem.energy(p, angles));
            }
        }
        if (trace) trace->energies.push_back(std::move(energies));
    }
    return out;
}

std::vector<double> cell_rotations(const DeformableGrid& grid) {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(std::max(0, grid.cell_count())));
    for (int cy = 0; cy < grid.rows - 1; ++cy) {
        for (int cx = 0; cx < grid.cols - 1; ++cx) out.push_back(rotation_angle(grid, cx, cy, grid.current_points));
    }
    return out;
}

double rigidity_energy(const DeformableGrid& grid) {
    double e = 0.0;
    for (int cy = 0; cy < grid.rows - 1; ++cy) {
        for (int cx = 0; cx < grid.cols - 1; ++cx) {
            e += cell_rigidity(grid, cx, cy, grid.current_points, rotation_angle(grid, cx, cy, grid.current_points));
        }
    }
    return e;
}

double mean_edge_length_change(const DeformableGrid& grid) {
    double sum = 0.0;
    int count = 0;
    auto edge = [&](size_t i, size_t j) {
        double rest = (grid.rest_points[i] - grid.rest_points[j]).norm();
        double cur = (grid.current_points[i] - grid.current_points[j]).norm();
        sum += std::abs(cur - rest) / rest;
        ++count;
    };
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            if (c + 1 < grid.cols) edge(grid.index(c, r), grid.index(c + 1, r));
            if (r + 1 < grid.rows) edge(grid.index(c, r), grid.index(c, r + 1));
        }
    }
    return count ? sum / count : 0.0;
}

void draw_grid_overlay(Image& image, const DeformableGrid& grid) {
    if (image.channels != 3) throw Error(ErrorCode::channel_mismatch, "grid overlay needs an RGB image");
    auto plot = [&](double x, double y) {
        int ix = static_cast<int>(std::lround(x));
        int iy = static_cast<int>(std::lround(y));
        if (ix < 0 || iy < 0 || ix >= image.width || iy >= image.height) return;
        image.at(ix, iy, 0) = 1.0f;
        image.at(ix, iy, 1) = 0.1f;
        image.at(ix, iy, 2) = 0.1f;
    };
    auto line = [&](const Vec2& a, const Vec2& b) {
        int steps = std::max(1, static_cast<int>(std::ceil((b - a).norm())));
        for (int s = 0; s <= steps; ++s) {
            double t = static_cast<double>(s) / steps;
            plot(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        }
    };
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const Vec2& p = grid.current_points[grid.index(c, r)];
            if (c + 1 < grid.cols) line(p, grid.current_points[grid.index(c + 1, r)]);
            if (r + 1 < grid.rows) line(p, grid.current_points[grid.index(c, r + 1)]);
        }
    }
}

}  // namespace patchstyle
