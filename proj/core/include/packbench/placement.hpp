#pragma once

// Drop heights, legality, state updates, and exhaustive oracles.
//
// A placement's (x, y) is the footprint center cell. A footprint of r x c
// cells centered at (x, y) covers rows [x - r/2, x - r/2 + r) and columns
// [y - c/2, y - c/2 + c), i.e. offsets s in [-floor(r/2), ceil(r/2) - 1].

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "packbench/geometry.hpp"

namespace packbench {

struct BoxSpec {
    int rows = 200;
    int cols = 200;
    double cell_mm = 2.0;
    Height height_cap = 3000;

    double length_mm() const { return rows * cell_mm; }
    double width_mm() const { return cols * cell_mm; }
    double height_mm() const { return quanta_to_mm(height_cap); }
};

struct Placement {
    std::size_t object = 0;
    int i = 0;  // roll/pitch index
    int j = 0;  // yaw index
    int x = 0;
    int y = 0;
    Height z = 0;
    double score = 0.0;

    bool operator==(const Placement&) const = default;
};

struct PackedItem {
    Placement placement;
    double volume_mm3 = 0.0;
    int stable = 1;
};

struct PackingState {
    Heightmap box;
    Height height_cap = 0;
    std::vector<PackedItem> packed;
    std::vector<std::size_t> unpacked;  // ascending object indices

    static PackingState empty(const BoxSpec& spec, std::size_t object_count);

    double packed_volume_mm3() const;
    double length_mm() const { return box.rows() * box.cell_mm(); }
    double width_mm() const { return box.cols() * box.cell_mm(); }
};

inline int footprint_origin(int center, int extent) { return center - extent / 2; }
inline int footprint_center(int origin, int extent) { return origin + extent / 2; }

/// Whether an r x c footprint centered at (x, y) lies inside the walls.
bool footprint_fits(const Heightmap& box, int rows, int cols, int x, int y);

/// z = max over footprint cells of H_c - H_b, at least 0. Columns where the
/// object is empty carry kNoSupport and never win the max.
Height compute_z(const Heightmap& box, const Heightmap& bottom, int x, int y);

/// compute_z without bounds checks, addressed by footprint origin.
Height drop_height(const Heightmap& box, const Heightmap& bottom, int x0, int y0) noexcept;

/// Cell (x, y) is legal iff the footprint fits and z + max(H_t) <= cap.
Mask legality_mask(const Heightmap& box, const Heightmap& top, const Heightmap& bottom, Height height_cap);

bool is_legal(const Heightmap& box, const OrientedShape& shape, int x, int y, Height height_cap);

/// New state with H_c = max(H_c, z + H_t) on the object's occupied columns.
/// Throws InvalidInput (leaving `state` untouched) when the placement is not
/// legal, z is not the drop height, or the object is not unpacked.
PackingState apply_placement(const PackingState& state, const Placement& p, const OrientedShape& shape, int stable = 1);

const OrientedShape* find_shape(std::span<const OrientedShape> shapes, int i, int j);

/// Per-orientation score grids with their legality masks.
struct ScoreMatrix {
    std::vector<Grid2<double>> scores;
    std::vector<Mask> legal;

    /// Forces illegal cells to exactly 0.
    void mask_illegal();
};

/// Maximized by brute_force_best. Receives the state after the placement.
using PlacementObjective = std::function<double(const PackingState& after, const Placement& p)>;

/// Candidate budget (orientations x cells) accepted by brute_force_best.
inline constexpr std::size_t kBruteForceMaxCandidates = 100000;

/// Scores every legal (orientation, x, y) and returns the maximizer; ties go to
/// the smallest (i, j, x, y). nullopt means no legal placement exists.
std::optional<Placement> brute_force_best(const PackingState& state, std::size_t object,
                                          std::span<const OrientedShape> orientations,
                                          const PlacementObjective& objective);

struct OverlapReport {
    std::int64_t interpenetrations = 0;  // voxels claimed twice
    std::int64_t cap_violations = 0;     // voxels above the height cap
    std::int64_t wall_violations = 0;    // voxels outside the box footprint
    bool ok() const { return interpenetrations == 0 && cap_violations == 0 && wall_violations == 0; }
};

/// Rebuilds every packed object from its voxels in 3D and checks for shared
/// voxels and cap violations. Needs right-angle yaws; all objects must share
/// the box lattice.
OverlapReport check_voxel_overlaps(const PackingState& state, std::span<const VoxelGrid> grids,
                                   const OrientationGrid& orientations);

}  // namespace packbench
