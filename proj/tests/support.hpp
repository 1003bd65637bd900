#pragma once

// Shared fixtures and brute-force oracles for the test binaries. Nothing here
// calls the library routine it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "packbench/geometry.hpp"
#include "packbench/placement.hpp"
#include "packbench/planners.hpp"
#include "packbench/rewards.hpp"
#include "packbench/rng.hpp"
#include "packbench/shapes.hpp"

namespace pbt {

using namespace packbench;

inline VoxelGrid box_grid(int nx, int ny, int nz, std::uint32_t cell_um = 2000) {
    VoxelGrid g({nx, ny, nz}, cell_um);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) g.set(x, y, z);
    return g;
}

/// Random voxel blob, not necessarily connected, tightened.
inline VoxelGrid random_blob(Rng& rng, int max_side, std::uint32_t cell_um, double fill = 0.55) {
    for (;;) {
        const int nx = 1 + static_cast<int>(rng.below(max_side));
        const int ny = 1 + static_cast<int>(rng.below(max_side));
        const int nz = 1 + static_cast<int>(rng.below(max_side));
        VoxelGrid g({nx, ny, nz}, cell_um);
        for (int z = 0; z < nz; ++z)
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x)
                    if (rng.bernoulli(fill)) g.set(x, y, z);
        if (!g.empty()) return g.tightened();
    }
}

/// Per-column top and bottom by direct scan: top = (max z + 1) layers,
/// bottom gap = min z layers, nullopt for empty columns.
struct ColumnScan {
    std::vector<std::vector<Height>> top;
    std::vector<std::vector<std::optional<Height>>> gap;
};

inline ColumnScan scan_columns(const VoxelGrid& g) {
    const auto d = g.dims();
    const Height h = g.layer_height();
    ColumnScan s;
    s.top.assign(d.nx, std::vector<Height>(d.ny, 0));
    s.gap.assign(d.nx, std::vector<std::optional<Height>>(d.ny));
    for (int x = 0; x < d.nx; ++x)
        for (int y = 0; y < d.ny; ++y)
            for (int z = 0; z < d.nz; ++z)
                if (g.occupied(x, y, z)) {
                    s.top[x][y] = (z + 1) * h;
                    if (!s.gap[x][y]) s.gap[x][y] = z * h;
                }
    return s;
}

/// Lowest collision-free drop height found by lowering the voxel set one
/// height quantum at a time from above the terrain until it first touches.
inline Height descending_drop(const Heightmap& terrain, const VoxelGrid& object, int x0, int y0) {
    const auto d = object.dims();
    const Height h = object.layer_height();
    auto collides = [&](Height z) {
        for (int x = 0; x < d.nx; ++x)
            for (int y = 0; y < d.ny; ++y)
                for (int k = 0; k < d.nz; ++k)
                    if (object.occupied(x, y, k) && z + k * h < terrain.at(x0 + x, y0 + y)) return true;
        return false;
    };
    Height z = terrain.max() + 1;
    while (z > 0 && !collides(z - 1)) --z;
    return z;
}

/// Brute-force convex-hull membership: inside a triangle, on a segment, or
/// equal to one of the points.
inline bool in_hull_bruteforce(const std::vector<Point2>& pts, Point2 p, double eps = 1e-9) {
    auto cross = [](Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); };
    auto on_segment = [&](Point2 a, Point2 b) {
        if (std::abs(cross(a, b, p)) > eps) return false;
        return p.x >= std::min(a.x, b.x) - eps && p.x <= std::max(a.x, b.x) + eps && p.y >= std::min(a.y, b.y) - eps &&
               p.y <= std::max(a.y, b.y) + eps;
    };
    const std::size_t n = pts.size();
    for (std::size_t a = 0; a < n; ++a) {
        if (std::abs(pts[a].x - p.x) <= eps && std::abs(pts[a].y - p.y) <= eps) return true;
        for (std::size_t b = a + 1; b < n; ++b) {
            if (on_segment(pts[a], pts[b])) return true;
            for (std::size_t c = b + 1; c < n; ++c) {
                if (std::abs(cross(pts[a], pts[b], pts[c])) <= eps) continue;
                const double d1 = cross(pts[a], pts[b], p), d2 = cross(pts[b], pts[c], p), d3 = cross(pts[c], pts[a], p);
                const bool neg = d1 < -eps || d2 < -eps || d3 < -eps;
                const bool pos = d1 > eps || d2 > eps || d3 > eps;
                if (!(neg && pos)) return true;
            }
        }
    }
    return false;
}

struct VoxelAudit {
    std::int64_t overlaps = 0;
    std::int64_t above_cap = 0;
    std::int64_t outside = 0;
    std::int64_t misaligned = 0;  // placement z not on the voxel lattice, or footprint mismatch
};

/// Rebuilds the packed scene voxel by voxel in a dense box lattice.
inline VoxelAudit audit_scene(const PackingState& state, const EpisodeContext& ctx) {
    const int rows = state.box.rows(), cols = state.box.cols();
    VoxelAudit a;
    if (state.packed.empty()) return a;
    const Height lh = ctx.episode->objects.front().grid.layer_height();
    const int layers = static_cast<int>(state.height_cap / lh) + 64;
    std::vector<std::uint8_t> occ(static_cast<std::size_t>(rows) * cols * layers, 0);
    for (const PackedItem& item : state.packed) {
        const Placement& p = item.placement;
        const VoxelGrid g = rotate_voxels(ctx.episode->objects[p.object].grid, ctx.orientations.euler(p.i, p.j));
        const OrientedShape* s = find_shape(ctx.shapes[p.object], p.i, p.j);
        const auto d = g.dims();
        if (!s || s->footprint_rows() != d.nx || s->footprint_cols() != d.ny || p.z % lh != 0) {
            ++a.misaligned;
            continue;
        }
        const int x0 = footprint_origin(p.x, d.nx), y0 = footprint_origin(p.y, d.ny), k0 = p.z / lh;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    if (!g.occupied(x, y, z)) continue;
                    const int bx = x0 + x, by = y0 + y, bz = k0 + z;
                    if (bx < 0 || by < 0 || bx >= rows || by >= cols) {
                        ++a.outside;
                        continue;
                    }
                    if (static_cast<Height>(bz + 1) * lh > state.height_cap) ++a.above_cap;
                    if (bz >= layers) continue;
                    auto& cell = occ[(static_cast<std::size_t>(bz) * rows + bx) * cols + by];
                    if (cell) ++a.overlaps;
                    cell = 1;
                }
    }
    return a;
}

/// Tiny episode built from explicit voxel grids.
inline std::shared_ptr<const EpisodeContext> context_from_grids(std::vector<VoxelGrid> grids, const BoxSpec& box,
                                                                 const OrientationGrid& og) {
    auto set = std::make_shared<EpisodeSet>();
    for (std::size_t k = 0; k < grids.size(); ++k) {
        char id[16];
        std::snprintf(id, sizeof id, "obj%03zu", k);
        set->objects.push_back(make_object(id, grids[k]));
        set->specs.push_back({});
    }
    return std::make_shared<const EpisodeContext>(make_context(std::move(set), og, box));
}

inline OrientationGrid right_angles() { return OrientationGrid::from_intervals(kPi / 2, kPi / 2); }
inline OrientationGrid upright_only() { return OrientationGrid({{0.0, 0.0}}, {0.0}); }

/// Quarter turn of a map, the same permutation the yaw views use.
inline Heightmap rotate_map(const Heightmap& m) { return rotate_yaw(ViewPair{m, m}, kPi / 2).top; }

/// One object dropped onto a terrain.
struct Scene {
    Heightmap terrain;
    OrientedShape shape;
    Placement p;
};

inline int check(const Scene& s) { return stability_check(s.terrain, s.p, s.shape); }

/// Contacts and hull membership recomputed with the brute-force oracle.
inline int oracle(const Scene& s) {
    const auto& t = s.shape.views.top;
    const int x0 = footprint_origin(s.p.x, t.rows()), y0 = footprint_origin(s.p.y, t.cols());
    std::vector<Point2> pts;
    for (int a = 0; a < t.rows(); ++a)
        for (int b = 0; b < t.cols(); ++b)
            if (t.at(a, b) > 0 && s.terrain.at(x0 + a, y0 + b) - s.shape.views.bottom.at(a, b) == s.p.z)
                pts.push_back({x0 + a + 0.5, y0 + b + 0.5});
    return in_hull_bruteforce(pts, {x0 + s.shape.com_x, y0 + s.shape.com_y}) ? 1 : 0;
}

inline OrientedShape upright(const VoxelGrid& g) { return orient_shape(g, upright_only(), 0, 0); }

inline Scene drop(Heightmap terrain, OrientedShape shape, int x, int y) {
    const Height z = compute_z(terrain, shape.views.bottom, x, y);
    return {std::move(terrain), std::move(shape), Placement{0, 0, 0, x, y, z, 0.0}};
}

}  // namespace pbt
