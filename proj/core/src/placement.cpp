#include "packbench/placement.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>

namespace packbench {

PackingState PackingState::empty(const BoxSpec& spec, std::size_t object_count) {
    PackingState s;
    s.box = Heightmap(spec.rows, spec.cols, spec.cell_mm, 0);
    s.height_cap = spec.height_cap;
    s.unpacked.resize(object_count);
    std::iota(s.unpacked.begin(), s.unpacked.end(), std::size_t{0});
    return s;
}

double PackingState::packed_volume_mm3() const {
    double v = 0.0;
    for (const auto& p : packed) v += p.volume_mm3;
    return v;
}

bool footprint_fits(const Heightmap& box, int rows, int cols, int x, int y) {
    const int x0 = footprint_origin(x, rows), y0 = footprint_origin(y, cols);
    return x0 >= 0 && y0 >= 0 && x0 + rows <= box.rows() && y0 + cols <= box.cols();
}

Height drop_height(const Heightmap& box, const Heightmap& bottom, int x0, int y0) noexcept {
    Height z = 0;
    const int r = bottom.rows(), c = bottom.cols();
    for (int a = 0; a < r; ++a) {
        const Height* hc = box.row(x0 + a) + y0;
        const Height* hb = bottom.row(a);
        for (int b = 0; b < c; ++b) z = std::max(z, hc[b] - hb[b]);
    }
    return z;
}

Height compute_z(const Heightmap& box, const Heightmap& bottom, int x, int y) {
    if (!footprint_fits(box, bottom.rows(), bottom.cols(), x, y))
        throw InvalidInput("compute_z: footprint outside the box at (" + std::to_string(x) + ", " + std::to_string(y) +
                           ")");
    return drop_height(box, bottom, footprint_origin(x, bottom.rows()), footprint_origin(y, bottom.cols()));
}

Mask legality_mask(const Heightmap& box, const Heightmap& top, const Heightmap& bottom, Height height_cap) {
    Mask m(box.rows(), box.cols(), 0);
    const Height peak = top.max();
    if (peak > height_cap) return m;
    const int r = bottom.rows(), c = bottom.cols();
    for (int x0 = 0; x0 + r <= box.rows(); ++x0)
        for (int y0 = 0; y0 + c <= box.cols(); ++y0)
            if (drop_height(box, bottom, x0, y0) + peak <= height_cap)
                m(footprint_center(x0, r), footprint_center(y0, c)) = 1;
    return m;
}

bool is_legal(const Heightmap& box, const OrientedShape& shape, int x, int y, Height height_cap) {
    const auto& b = shape.views.bottom;
    if (!footprint_fits(box, b.rows(), b.cols(), x, y)) return false;
    const Height z = drop_height(box, b, footprint_origin(x, b.rows()), footprint_origin(y, b.cols()));
    return z + shape.peak <= height_cap;
}

PackingState apply_placement(const PackingState& state, const Placement& p, const OrientedShape& shape, int stable) {
    const auto it = std::lower_bound(state.unpacked.begin(), state.unpacked.end(), p.object);
    if (it == state.unpacked.end() || *it != p.object)
        throw InvalidInput("apply_placement: object " + std::to_string(p.object) + " is not unpacked");
    const auto& top = shape.views.top;
    const auto& bottom = shape.views.bottom;
    if (!footprint_fits(state.box, top.rows(), top.cols(), p.x, p.y))
        throw InvalidInput("apply_placement: footprint outside the box");
    const int x0 = footprint_origin(p.x, top.rows()), y0 = footprint_origin(p.y, top.cols());
    const Height z = drop_height(state.box, bottom, x0, y0);
    if (p.z != z)
        throw InvalidInput("apply_placement: z " + std::to_string(p.z) + " differs from the drop height " +
                           std::to_string(z));
    if (z + shape.peak > state.height_cap) throw InvalidInput("apply_placement: exceeds the height cap");

    PackingState next = state;
    for (int a = 0; a < top.rows(); ++a)
        for (int b = 0; b < top.cols(); ++b) {
            const Height t = top.at(a, b);
            if (t == 0) continue;
            Height& hc = next.box.at(x0 + a, y0 + b);
            hc = std::max(hc, z + t);
        }
    next.unpacked.erase(next.unpacked.begin() + (it - state.unpacked.begin()));
    next.packed.push_back({p, shape.volume_mm3, stable});
    return next;
}

const OrientedShape* find_shape(std::span<const OrientedShape> shapes, int i, int j) {
    for (const auto& s : shapes)
        if (s.rp_index == i && s.yaw_index == j) return &s;
    return nullptr;
}

void ScoreMatrix::mask_illegal() {
    for (std::size_t k = 0; k < scores.size(); ++k) {
        auto s = scores[k].data();
        auto m = legal.at(k).data();
        for (std::size_t c = 0; c < s.size(); ++c)
            if (!m[c]) s[c] = 0.0;
    }
}

std::optional<Placement> brute_force_best(const PackingState& state, std::size_t object,
                                          std::span<const OrientedShape> orientations,
                                          const PlacementObjective& objective) {
    const std::size_t budget = orientations.size() * state.box.size();
    if (budget > kBruteForceMaxCandidates)
        throw InvalidInput("brute_force_best: instance exceeds the candidate budget of " +
                           std::to_string(kBruteForceMaxCandidates));
    std::vector<const OrientedShape*> order;
    for (const auto& s : orientations) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const OrientedShape* a, const OrientedShape* b) {
        return std::tie(a->rp_index, a->yaw_index) < std::tie(b->rp_index, b->yaw_index);
    });

    std::optional<Placement> best;
    double best_score = 0.0;
    for (const OrientedShape* s : order)
        for (int x = 0; x < state.box.rows(); ++x)
            for (int y = 0; y < state.box.cols(); ++y) {
                if (!is_legal(state.box, *s, x, y, state.height_cap)) continue;
                Placement p{object, s->rp_index, s->yaw_index, x, y, compute_z(state.box, s->views.bottom, x, y), 0.0};
                const double score = objective(apply_placement(state, p, *s), p);
                if (!best || score > best_score) {
                    p.score = score;
                    best = p;
                    best_score = score;
                }
            }
    return best;
}

OverlapReport check_voxel_overlaps(const PackingState& state, std::span<const VoxelGrid> grids,
                                   const OrientationGrid& orientations) {
    OverlapReport rep;
    const int rows = state.box.rows(), cols = state.box.cols();
    std::vector<VoxelGrid> placed;
    std::vector<std::array<int, 3>> origins;
    int layers = 1;
    for (const auto& item : state.packed) {
        const auto& p = item.placement;
        const VoxelGrid& g = grids[p.object];
        const EulerAngles e = orientations.euler(p.i, p.j);
        if (!is_right_angle(e.yaw))
            throw InvalidInput("check_voxel_overlaps: needs right-angle yaws");
        VoxelGrid r = rotate_voxels(g, e);
        const Height lh = r.layer_height();
        if (p.z % lh != 0) throw InvalidInput("check_voxel_overlaps: z is off the voxel lattice");
        const int z0 = p.z / lh;
        origins.push_back({footprint_origin(p.x, r.dims().nx), footprint_origin(p.y, r.dims().ny), z0});
        layers = std::max(layers, z0 + r.dims().nz);
        placed.push_back(std::move(r));
    }
    const Height lh = placed.empty() ? 1 : placed.front().layer_height();
    const int cap_layers = state.height_cap / lh;
    std::vector<std::uint8_t> occ(static_cast<std::size_t>(rows) * cols * layers, 0);
    for (std::size_t k = 0; k < placed.size(); ++k) {
        const auto& g = placed[k];
        const auto [ox, oy, oz] = origins[k];
        const auto& d = g.dims();
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    if (!g.occupied(x, y, z)) continue;
                    const int bx = ox + x, by = oy + y, bz = oz + z;
                    if (bx < 0 || by < 0 || bx >= rows || by >= cols) {
                        ++rep.wall_violations;
                        continue;
                    }
                    if (bz >= cap_layers) ++rep.cap_violations;
                    auto& cell = occ[(static_cast<std::size_t>(bz) * rows + bx) * cols + by];
                    if (cell) ++rep.interpenetrations;
                    cell = 1;
                }
    }
    return rep;
}

}  // namespace packbench
